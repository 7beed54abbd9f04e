#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qgarch/qgarch.hpp"

using json = nlohmann::json;
using namespace qgarch;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

json matrix_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(row);
  }
  return a;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw std::invalid_argument("cannot parse '" + item + "' as a number in list '" + s + "'");
    }
  }
  if (v.empty()) throw std::invalid_argument("empty list '" + s + "'");
  return v;
}

// Writes to `path`, or to stdout when path is "-".
void emit(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot open output file '" + path + "'");
  out << text;
}

BandwidthRule parse_rule(const std::string& s) {
  if (s == "hs" || s == "hall-sheather") return BandwidthRule::HallSheather;
  if (s == "bofinger" || s == "b") return BandwidthRule::Bofinger;
  throw std::invalid_argument("unknown bandwidth rule '" + s + "' (use hs or bofinger)");
}

ForecastMethod parse_method(const std::string& s) {
  if (s == "qr") return ForecastMethod::QR;
  if (s == "cqr") return ForecastMethod::CQR;
  if (s == "fhs") return ForecastMethod::FHS;
  throw std::invalid_argument("unknown method '" + s + "' (use qr, cqr or fhs)");
}

std::string se_string(double v, double se) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f(%.4f)", v, se);
  return buf;
}

struct Forecasts {
  std::vector<std::string> dates;
  std::vector<double> y;
  std::vector<double> q;
  std::vector<char> hits;
};

std::string forecasts_csv(const ForecastRun& run) {
  std::ostringstream o;
  o << "date,y,q_hat,hit\n";
  for (std::size_t i = 0; i < run.forecasts.size(); ++i) {
    const std::string date = run.labels.empty() ? std::to_string(run.first_index + i + 1) : run.labels[i];
    o << date << ',' << format_double(run.actual[i]) << ',' << format_double(run.forecasts[i]) << ','
      << (run.hits[i] ? 1 : 0) << '\n';
  }
  return o.str();
}

Forecasts read_forecasts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open forecasts file '" + path + "'");
  Forecasts f;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    std::stringstream ss(line);
    std::string date, ys, qs, hs;
    if (!std::getline(ss, date, ',') || !std::getline(ss, ys, ',') || !std::getline(ss, qs, ',') ||
        !std::getline(ss, hs, ','))
      throw std::invalid_argument("forecasts line " + std::to_string(lineno) + ": expected date,y,q_hat,hit");
    try {
      f.dates.push_back(date);
      f.y.push_back(std::stod(ys));
      f.q.push_back(std::stod(qs));
      f.hits.push_back(std::stoi(hs) != 0 ? 1 : 0);
    } catch (const std::exception&) {
      throw std::invalid_argument("forecasts line " + std::to_string(lineno) + ": malformed number");
    }
  }
  if (f.y.empty()) throw std::invalid_argument("forecasts file holds no rows");
  return f;
}

json report_json(const BacktestReport& r) {
  return {{"ecr", r.ecr},           {"pe", r.pe},
          {"cc_pvalue", r.cc_pvalue}, {"dq_pvalue", r.dq_pvalue},
          {"cc_degenerate", r.cc_degenerate}, {"dq_reduced", r.dq_reduced},
          {"n_test", r.n_test}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantile GARCH(1,1): simulation, QR/CQR estimation, constancy test, rolling VaR forecasts"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "print this help message and exit");

  // Shared option storage.
  std::string input, kind = "returns", output = "-", setting = "5.2", dist = "normal", rule = "hs";
  std::string method = "qr", h_grid = "0.02,0.04,0.06,0.08,0.1", stat = "cvm", r_vec = "0,0,1";
  std::string multipliers = "1";
  std::size_t n = 2000, burn_in = 500, reps = 200, n0 = 1000, n1 = 0;
  std::uint64_t seed = 1;
  double tau = 0.05, d = 0.0, h = 0.1, tau_lo = 0.7, tau_hi = 0.995, delta = 0.005, block = 1.0, alpha = 0.05;
  double multiplier = 1.0;
  int K = 19;
  bool no_cov = false, simplified = false;

  const CLI::Validator unit_open(
      [](std::string& v) {
        const double x = std::stod(v);
        return x > 0.0 && x < 1.0 ? std::string() : "must lie strictly between 0 and 1";
      },
      "(0,1)");

  auto* sim = app.add_subcommand("simulate", "simulate a QGARCH(1,1) path to CSV");
  sim->add_option("--setting", setting, "coefficient setting: 5.2, 5.3 or 5.4");
  sim->add_option("--dist", dist, "innovations: normal or tukey(<lambda>)");
  sim->add_option("--d", d, "curvature of beta1 in setting 5.4");
  sim->add_option("--n", n, "sample size")->check(CLI::PositiveNumber);
  sim->add_option("--burn-in", burn_in, "discarded initial observations");
  sim->add_option("--seed", seed, "random seed");
  sim->add_option("--output,-o", output, "output CSV (- for stdout)");

  auto* fit = app.add_subcommand("fit", "self-weighted QR fit with sandwich standard errors");
  fit->add_option("--input,-i", input, "input CSV date,value")->required();
  fit->add_option("--kind", kind, "returns or prices");
  fit->add_option("--tau", tau, "quantile level")->check(unit_open);
  fit->add_option("--bandwidth", rule, "density bandwidth: hs or bofinger");
  fit->add_flag("--no-cov", no_cov, "skip the covariance");
  fit->add_option("--output,-o", output, "output JSON (- for stdout)");

  auto* cfit = app.add_subcommand("cqr-fit", "self-weighted composite quantile regression");
  cfit->add_option("--input,-i", input, "input CSV date,value")->required();
  cfit->add_option("--kind", kind, "returns or prices");
  cfit->add_option("--tau0", tau, "target quantile level")->check(unit_open);
  cfit->add_option("--h", h, "level spread h");
  cfit->add_option("--K", K, "number of levels");
  cfit->add_option("--multiplier", multiplier, "HAC bandwidth multiplier");
  cfit->add_flag("--simplified", simplified, "covariance under correct specification");
  cfit->add_flag("--no-cov", no_cov, "skip the covariance");
  cfit->add_option("--output,-o", output, "output JSON (- for stdout)");

  auto* selh = app.add_subcommand("select-h", "choose the CQR level spread h on a validation block");
  selh->add_option("--input,-i", input, "input CSV date,value")->required();
  selh->add_option("--kind", kind, "returns or prices");
  selh->add_option("--tau0", tau, "target quantile level")->check(unit_open);
  selh->add_option("--n0", n0, "training length (first n0 observations)");
  selh->add_option("--n1", n1, "validation length (next n1 observations)")->required();
  selh->add_option("--h-grid", h_grid, "comma-separated candidate h values");
  selh->add_option("--K", K, "number of levels");
  selh->add_option("--output,-o", output, "output JSON (- for stdout)");

  auto* cvm = app.add_subcommand("cvm-test", "constancy test of R theta(tau) over a level grid");
  cvm->add_option("--input,-i", input, "input CSV date,value")->required();
  cvm->add_option("--kind", kind, "returns or prices");
  cvm->add_option("--tau-lo", tau_lo, "lowest level");
  cvm->add_option("--tau-hi", tau_hi, "highest level");
  cvm->add_option("--delta", delta, "grid spacing");
  cvm->add_option("--R", r_vec, "restriction vector, e.g. 0,0,1");
  cvm->add_option("--block-factor", block, "block size b = floor(c sqrt(n))");
  cvm->add_option("--alpha", alpha, "significance level");
  cvm->add_option("--stat", stat, "cvm or ks");
  cvm->add_option("--bandwidth", rule, "density bandwidth: hs or bofinger");
  cvm->add_option("--output,-o", output, "output JSON (- for stdout)");

  auto* fc = app.add_subcommand("forecast", "rolling one-step-ahead quantile forecasts");
  fc->add_option("--input,-i", input, "input CSV date,value")->required();
  fc->add_option("--kind", kind, "returns or prices");
  fc->add_option("--method", method, "qr, cqr or fhs");
  fc->add_option("--tau", tau, "quantile level")->check(unit_open);
  fc->add_option("--n0", n0, "moving window length");
  fc->add_option("--n1", n1, "validation length for choosing h (cqr)");
  fc->add_option("--h", h, "fixed h for cqr (skips validation when --n1 is 0)");
  fc->add_option("--h-grid", h_grid, "candidate h values for cqr");
  fc->add_option("--K", K, "number of levels (cqr)");
  fc->add_option("--output,-o", output, "forecasts CSV (- for stdout)");

  auto* bt = app.add_subcommand("backtest", "ECR, PE, CC and DQ for a forecasts CSV");
  bt->add_option("--input,-i", input, "forecasts CSV date,y,q_hat,hit")->required();
  bt->add_option("--tau", tau, "quantile level")->check(unit_open);
  bt->add_option("--output,-o", output, "output JSON (- for stdout)");

  auto* mc = app.add_subcommand("montecarlo", "replicated simulation study, Bias/ESD/ASD table");
  mc->add_option("--method", method, "qr or cqr");
  mc->add_option("--setting", setting, "coefficient setting");
  mc->add_option("--dist", dist, "innovations");
  mc->add_option("--d", d, "curvature of beta1 in setting 5.4");
  mc->add_option("--n", n, "sample size")->check(CLI::PositiveNumber);
  mc->add_option("--tau", tau, "quantile level (tau0 for cqr)")->check(unit_open);
  mc->add_option("--h", h, "level spread (cqr)");
  mc->add_option("--K", K, "number of levels (cqr)");
  mc->add_option("--multipliers", multipliers, "HAC bandwidth multipliers (cqr)");
  mc->add_option("--reps", reps, "replications")->check(CLI::PositiveNumber);
  mc->add_option("--seed", seed, "base seed; replication r uses seed + r");
  mc->add_option("--output,-o", output, "table CSV (- for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*sim) {
      SimulationSpec sp;
      sp.coef = preset_setting(setting, dist, d);
      sp.n = n;
      sp.burn_in = burn_in;
      sp.seed = seed;
      std::ostringstream o;
      write_series_csv(o, simulate_qgarch(sp));
      emit(output, o.str());
    } else if (*fit) {
      const ReturnSeries s = read_series_csv(input, parse_series_kind(kind));
      QrFitConfig c;
      c.tau = tau;
      c.weights = compute_self_weights(s.values(), c.weight_cfg);
      QuantileFit f = qr_fit(s, c);
      json j{{"command", "fit"}, {"n", s.size()}, {"tau", f.tau}, {"objective", f.objective_value},
             {"weights_id", f.weights_id},
             {"theta", {{"omega", f.theta_hat.omega}, {"alpha1", f.theta_hat.alpha1}, {"beta1", f.theta_hat.beta1}}}};
      std::array<double, 3> se{NAN, NAN, NAN};
      if (!no_cov) {
        attach_covariance(s, c, f, parse_rule(rule));
        se = f.asd();
        j["cov"] = matrix_json(*f.cov);
        j["se"] = {{"omega", se[0]}, {"alpha1", se[1]}, {"beta1", se[2]}};
        j["bandwidth_rule"] = to_string(f.bandwidth_rule);
        j["bandwidth"] = f.bandwidth;
        j["density_dropped"] = f.density_dropped;
        j["ill_conditioned"] = f.ill_conditioned;
      }
      emit(output, j.dump(2) + "\n");
      if (output != "-")
        std::cout << "q_t = " << se_string(f.theta_hat.omega, se[0]) << " + " << se_string(f.theta_hat.alpha1, se[1])
                  << " sum_j " << se_string(f.theta_hat.beta1, se[2]) << "^(j-1) |y_(t-j)|\n";
    } else if (*cfit) {
      const ReturnSeries s = read_series_csv(input, parse_series_kind(kind));
      CqrConfig c;
      c.tau0 = tau;
      c.h = h;
      c.K = K;
      c.weights = compute_self_weights(s.values(), c.weight_cfg);
      CqrFit f = cqr_fit(s, c);
      const QGarchParams th = g_transform(f.phi_hat, tau);
      json j{{"command", "cqr-fit"}, {"n", s.size()}, {"tau0", tau}, {"h", h}, {"K", K},
             {"objective", f.objective_value}, {"levels", f.tau_levels}, {"weights_id", f.weights_id},
             {"phi", {{"a0", f.phi_hat.a0}, {"a1", f.phi_hat.a1}, {"b1", f.phi_hat.b1}, {"lambda", f.phi_hat.lambda}}},
             {"theta", {{"omega", th.omega}, {"alpha1", th.alpha1}, {"beta1", th.beta1}}}};
      if (!no_cov) {
        const CqrCovariance cv = cqr_asymptotic_cov(s, f, c.weights, multiplier, simplified);
        j["cov"] = matrix_json(cv.sigma / static_cast<double>(s.size()));
        j["theta_cov"] = matrix_json(cv.theta_cov_at(tau));
        j["hac_bandwidth"] = cv.hac_bandwidth;
        j["simplified"] = simplified;
        j["condition"] = cv.condition;
      }
      emit(output, j.dump(2) + "\n");
    } else if (*selh) {
      const ReturnSeries s = read_series_csv(input, parse_series_kind(kind));
      if (n0 + n1 > s.size()) throw std::invalid_argument("select-h: n0 + n1 exceeds the series length");
      CqrConfig c;
      c.K = K;
      const std::vector<double> grid = parse_list(h_grid);
      const BandwidthSelection sel = select_bandwidth_h(s.slice(0, n0), s.slice(n0, n1), tau, grid, c);
      json j{{"command", "select-h"}, {"tau0", tau}, {"h_opt", sel.h_opt}, {"h_grid", sel.h_grid},
             {"validation_loss", sel.validation_loss}};
      emit(output, j.dump(2) + "\n");
    } else if (*cvm) {
      const ReturnSeries s = read_series_csv(input, parse_series_kind(kind));
      CvmConfig c;
      c.tau_grid = make_tau_grid(tau_lo, tau_hi, delta);
      c.delta = delta;
      const std::vector<double> rv = parse_list(r_vec);
      if (rv.size() != 3) throw std::invalid_argument("--R needs three entries");
      c.R = Eigen::RowVector3d(rv[0], rv[1], rv[2]);
      c.block_factor = block;
      c.alpha = alpha;
      if (stat == "ks") c.statistic = CvmStatistic::KS;
      else if (stat != "cvm") throw std::invalid_argument("unknown statistic '" + stat + "' (use cvm or ks)");
      c.bandwidth_rule = parse_rule(rule);
      const CvmResult r = cvm_test(s, c);
      json j{{"command", "cvm-test"}, {"statistic", stat}, {"S_n", r.statistic_value},
             {"critical_value", r.critical_value}, {"p_value", r.p_value}, {"reject", r.reject()},
             {"block_size", r.block_size}, {"alpha", alpha}, {"tau_grid", c.tau_grid},
             {"coefficient_path", r.coefficient_path}};
      emit(output, j.dump(2) + "\n");
    } else if (*fc) {
      const ReturnSeries s = read_series_csv(input, parse_series_kind(kind));
      RollingConfig c;
      c.method = parse_method(method);
      c.tau = tau;
      c.n0 = n0;
      c.n1 = n1;
      c.cqr.K = K;
      c.h_grid = parse_list(h_grid);
      if (c.method == ForecastMethod::CQR && n1 == 0) c.fixed_h = h;
      const ForecastRun run = rolling_forecast(s, c);
      emit(output, forecasts_csv(run));
      const BacktestReport r = backtest(run.hits, tau);
      std::cerr << to_string(run.method) << " tau=" << tau << " n_test=" << r.n_test << " ECR=" << r.ecr
                << " PE=" << r.pe << " CC p=" << r.cc_pvalue << " DQ p=" << r.dq_pvalue
                << " failed_refits=" << run.failed_origins << (run.method == ForecastMethod::CQR ? " h=" + std::to_string(run.h) : "")
                << '\n';
    } else if (*bt) {
      const Forecasts f = read_forecasts(input);
      json j = report_json(backtest(f.hits, tau));
      j["command"] = "backtest";
      j["tau"] = tau;
      emit(output, j.dump(2) + "\n");
    } else if (*mc) {
      std::ostringstream o;
      o << "param,True,Bias,ESD,ASD_B,ASD_HS\n";
      auto row = [&](const McRow& r) {
        o << r.param << ',' << format_double(r.truth) << ',' << format_double(r.bias) << ',' << format_double(r.esd)
          << ',' << format_double(r.asd_b) << ',' << format_double(r.asd_hs) << '\n';
      };
      if (method == "qr") {
        QrMcConfig c;
        c.setting = setting;
        c.dist = dist;
        c.d = d;
        c.n = n;
        c.tau = tau;
        c.reps = reps;
        c.seed = seed;
        const QrMcResult r = qr_monte_carlo(c);
        for (const McRow& m : r.rows()) row(m);
        if (r.cov_failures > 0) std::cerr << "covariance failed in " << r.cov_failures << " replications\n";
      } else if (method == "cqr") {
        CqrMcConfig c;
        c.setting = setting;
        c.dist = dist;
        c.n = n;
        c.tau0 = tau;
        c.h = h;
        c.K = K;
        c.reps = reps;
        c.seed = seed;
        c.multipliers = parse_list(multipliers);
        const CqrMcResult r = cqr_monte_carlo(c);
        // For CQR the ASD columns hold the first and last HAC multipliers.
        std::vector<Eigen::VectorXd> est, sa, sb;
        for (const CqrMcRep& rep : r.reps) {
          est.push_back(rep.theta);
          sa.push_back(rep.se.front());
          sb.push_back(rep.se.back());
        }
        for (const McRow& m : summarize({"omega", "alpha1", "beta1"}, r.truth, est, sa, sb)) row(m);
      } else {
        throw std::invalid_argument("montecarlo: unknown method '" + method + "' (use qr or cqr)");
      }
      emit(output, o.str());
    }
  } catch (const NumericalError& e) {
    std::cerr << "error[numerical]: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::domain_error& e) {
    // Degenerate data (e.g. an all-zero series) surfaces as a domain error.
    std::cerr << "error[numerical]: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error[usage]: " << e.what() << '\n';
    return kExitUsage;
  }
  return 0;
}
