#pragma once

#include "cmplab/ablation.hpp"
#include "cmplab/autodiff.hpp"
#include "cmplab/cmploss.hpp"
#include "cmplab/errors.hpp"
#include "cmplab/grad_check.hpp"
#include "cmplab/models.hpp"
#include "cmplab/rng.hpp"
#include "cmplab/tasks.hpp"
#include "cmplab/tensor.hpp"
#include "cmplab/train.hpp"
