#pragma once

#include "optprof/distributions.hpp"
#include "optprof/error.hpp"
#include "optprof/eval.hpp"
#include "optprof/gridworld.hpp"
#include "optprof/losses.hpp"
#include "optprof/mdp.hpp"
#include "optprof/ot.hpp"
#include "optprof/random.hpp"
#include "optprof/reward_model.hpp"
#include "optprof/trainer.hpp"
