#pragma once

#include "editdiff/numeric.hpp"
#include "editdiff/core_seq.hpp"
#include "editdiff/forward_step.hpp"
#include "editdiff/pfst_cumulative.hpp"
#include "editdiff/posterior.hpp"
#include "editdiff/oracle.hpp"
#include "editdiff/nn/transformer.hpp"
#include "editdiff/nn/adam.hpp"
#include "editdiff/denoiser.hpp"
#include "editdiff/config.hpp"
#include "editdiff/training.hpp"
#include "editdiff/checkpoint.hpp"
#include "editdiff/verify.hpp"
