#pragma once

#include "aif/errors.hpp"
#include "aif/random.hpp"
#include "aif/serialize.hpp"
#include "aif/mlp.hpp"
#include "aif/gaussian.hpp"
#include "aif/normalizer.hpp"
#include "aif/ensemble.hpp"
#include "aif/generative_model.hpp"
#include "aif/efe.hpp"
#include "aif/planner.hpp"
#include "aif/env/environment.hpp"
#include "aif/env/mountain_ridge.hpp"
#include "aif/env/tilted_table.hpp"
#include "aif/agent/config.hpp"
#include "aif/agent/logs.hpp"
#include "aif/agent/agent.hpp"
#include "aif/agent/runner.hpp"
#include "aif/oracle/quadrature.hpp"
