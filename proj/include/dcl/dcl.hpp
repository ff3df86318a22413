#pragma once

#include "dcl/backend.hpp"
#include "dcl/common.hpp"
#include "dcl/comparison.hpp"
#include "dcl/config.hpp"
#include "dcl/corpus.hpp"
#include "dcl/metrics.hpp"
#include "dcl/negatives.hpp"
#include "dcl/objective.hpp"
#include "dcl/pipeline.hpp"
#include "dcl/porter.hpp"
#include "dcl/statistics.hpp"
#include "dcl/synthetic.hpp"
#include "dcl/text.hpp"
#include "dcl/trainer.hpp"
