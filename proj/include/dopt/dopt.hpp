#pragma once

#include "dopt/criterion.hpp"
#include "dopt/errors.hpp"
#include "dopt/heat1d.hpp"
#include "dopt/linalg.hpp"
#include "dopt/model.hpp"
#include "dopt/waterfill.hpp"
