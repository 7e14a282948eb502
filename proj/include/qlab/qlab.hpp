#pragma once

#include "qlab/bounds.hpp"
#include "qlab/chain.hpp"
#include "qlab/experiments.hpp"
#include "qlab/io.hpp"
#include "qlab/mdp.hpp"
#include "qlab/qlearn.hpp"
#include "qlab/types.hpp"
