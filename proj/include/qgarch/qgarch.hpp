#pragma once

#include "qgarch/backtest.hpp"
#include "qgarch/cqr.hpp"
#include "qgarch/error.hpp"
#include "qgarch/fhs.hpp"
#include "qgarch/inference.hpp"
#include "qgarch/io.hpp"
#include "qgarch/linear_qr.hpp"
#include "qgarch/loss.hpp"
#include "qgarch/montecarlo.hpp"
#include "qgarch/parallel.hpp"
#include "qgarch/qr.hpp"
#include "qgarch/recursion.hpp"
#include "qgarch/rng.hpp"
#include "qgarch/simulate.hpp"
#include "qgarch/stationarity.hpp"
#include "qgarch/stats.hpp"
#include "qgarch/tukey.hpp"
#include "qgarch/types.hpp"
#include "qgarch/weights.hpp"
