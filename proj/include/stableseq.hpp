#pragma once

#include "stableseq/adaptive.hpp"
#include "stableseq/dataset.hpp"
#include "stableseq/distance.hpp"
#include "stableseq/error.hpp"
#include "stableseq/eval.hpp"
#include "stableseq/full_linear.hpp"
#include "stableseq/matching.hpp"
#include "stableseq/model.hpp"
#include "stableseq/pareto.hpp"
#include "stableseq/pool_io.hpp"
#include "stableseq/rng.hpp"
#include "stableseq/selector.hpp"
#include "stableseq/trainers.hpp"
