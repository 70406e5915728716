#pragma once

#include "comevl/error.hpp"
#include "comevl/tensor.hpp"
#include "comevl/ops.hpp"
#include "comevl/cmvt.hpp"
#include "comevl/parallel.hpp"
#include "comevl/linalg.hpp"
#include "comevl/random.hpp"
#include "comevl/ortho.hpp"
#include "comevl/entropy_select.hpp"
#include "comevl/rope_fusion.hpp"
#include "comevl/boxcodec.hpp"
#include "comevl/rollout.hpp"
#include "comevl/gradcheck.hpp"
#include "comevl/synth.hpp"
