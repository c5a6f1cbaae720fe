#ifndef CONVBIAS_HPP
#define CONVBIAS_HPP

#include "convbias/error.hpp"
#include "convbias/matrix.hpp"
#include "convbias/linalg.hpp"
#include "convbias/rng.hpp"
#include "convbias/stats.hpp"
#include "convbias/parallel.hpp"
#include "convbias/tasks.hpp"
#include "convbias/shift.hpp"
#include "convbias/models.hpp"
#include "convbias/dynamics.hpp"
#include "convbias/theory.hpp"
#include "convbias/harness.hpp"

#endif  // CONVBIAS_HPP
