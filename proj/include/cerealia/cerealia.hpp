#pragma once

#include "cerealia/core/error.hpp"
#include "cerealia/core/io.hpp"
#include "cerealia/core/noise_class.hpp"
#include "cerealia/core/numeric_text.hpp"
#include "cerealia/core/rng.hpp"
#include "cerealia/core/series.hpp"
#include "cerealia/core/time.hpp"
#include "cerealia/detect/detector.hpp"
#include "cerealia/detect/features.hpp"
#include "cerealia/detect/fit.hpp"
#include "cerealia/detect/mlp.hpp"
#include "cerealia/detect/neural.hpp"
#include "cerealia/detect/persist.hpp"
#include "cerealia/detect/stat.hpp"
#include "cerealia/detect/training.hpp"
#include "cerealia/faults/dataset.hpp"
#include "cerealia/faults/injectors.hpp"
#include "cerealia/fst/experiment.hpp"
#include "cerealia/fst/oracle.hpp"
#include "cerealia/fst/regressor.hpp"
#include "cerealia/impute/ar.hpp"
#include "cerealia/ingest/csv.hpp"
#include "cerealia/ingest/poller.hpp"
#include "cerealia/ingest/schemas.hpp"
#include "cerealia/ingest/synth.hpp"
#include "cerealia/metrics/metrics.hpp"
#include "cerealia/runtime/alerts.hpp"
#include "cerealia/runtime/bench.hpp"
#include "cerealia/runtime/checker.hpp"
#include "cerealia/runtime/service.hpp"
#include "cerealia/runtime/store.hpp"
