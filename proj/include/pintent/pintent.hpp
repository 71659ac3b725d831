#pragma once

#include "pintent/analytics.hpp"
#include "pintent/common.hpp"
#include "pintent/config.hpp"
#include "pintent/eval.hpp"
#include "pintent/event.hpp"
#include "pintent/features.hpp"
#include "pintent/ingest.hpp"
#include "pintent/markov.hpp"
#include "pintent/ml/models.hpp"
#include "pintent/session.hpp"
#include "pintent/synthgen.hpp"
