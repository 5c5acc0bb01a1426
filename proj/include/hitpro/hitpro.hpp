#pragma once

#include "hitpro/checkpoint.hpp"
#include "hitpro/common.hpp"
#include "hitpro/config.hpp"
#include "hitpro/datamodel.hpp"
#include "hitpro/encoder.hpp"
#include "hitpro/evaluator.hpp"
#include "hitpro/gradcheck.hpp"
#include "hitpro/mining.hpp"
#include "hitpro/objective.hpp"
#include "hitpro/prototyping.hpp"
#include "hitpro/sampler.hpp"
#include "hitpro/synthgen.hpp"
#include "hitpro/trainer.hpp"
