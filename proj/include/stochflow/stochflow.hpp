#pragma once

#include "stochflow/assumptions.hpp"
#include "stochflow/catalog.hpp"
#include "stochflow/coefficients.hpp"
#include "stochflow/config.hpp"
#include "stochflow/counterexamples.hpp"
#include "stochflow/expression.hpp"
#include "stochflow/feynman_kac.hpp"
#include "stochflow/jacobian.hpp"
#include "stochflow/linalg.hpp"
#include "stochflow/mollifier.hpp"
#include "stochflow/norm_equivalence.hpp"
#include "stochflow/parallel.hpp"
#include "stochflow/paths.hpp"
#include "stochflow/quadrature.hpp"
#include "stochflow/report.hpp"
#include "stochflow/rng.hpp"
#include "stochflow/runner.hpp"
#include "stochflow/time_function.hpp"
#include "stochflow/truncation.hpp"
#include "stochflow/weight.hpp"
