#pragma once

#include "big/bamdp.hpp"
#include "big/belief.hpp"
#include "big/birl.hpp"
#include "big/cmdp.hpp"
#include "big/envs.hpp"
#include "big/error.hpp"
#include "big/harness.hpp"
#include "big/io.hpp"
#include "big/planning.hpp"
#include "big/reward_posterior.hpp"
#include "big/rng.hpp"
#include "big/successor.hpp"
