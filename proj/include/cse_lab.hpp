#pragma once

#include "cse_lab/appendix.hpp"
#include "cse_lab/decompose.hpp"
#include "cse_lab/error.hpp"
#include "cse_lab/experiments.hpp"
#include "cse_lab/fock.hpp"
#include "cse_lab/noon.hpp"
#include "cse_lab/run.hpp"
#include "cse_lab/sampler.hpp"
#include "cse_lab/serialize.hpp"
#include "cse_lab/version.hpp"
