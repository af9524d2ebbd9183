#pragma once

#include "calibration.hpp"
#include "data.hpp"
#include "exact_dists.hpp"
#include "experiments.hpp"
#include "levels.hpp"
#include "nested_family.hpp"
#include "predictors.hpp"
#include "risk_control.hpp"
#include "seeding.hpp"
#include "tables.hpp"
#include "verification.hpp"
