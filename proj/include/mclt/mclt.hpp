#ifndef MCLT_MCLT_HPP
#define MCLT_MCLT_HPP

#include "mclt/bounds.hpp"
#include "mclt/conditions.hpp"
#include "mclt/corpus.hpp"
#include "mclt/distance.hpp"
#include "mclt/errors.hpp"
#include "mclt/kernel.hpp"
#include "mclt/lipschitz.hpp"
#include "mclt/normal.hpp"
#include "mclt/parallel.hpp"
#include "mclt/rng.hpp"
#include "mclt/simulate.hpp"
#include "mclt/step_distribution.hpp"
#include "mclt/transforms.hpp"

#endif  // MCLT_MCLT_HPP
