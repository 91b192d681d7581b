#pragma once

#include "kfspoof/error.hpp"
#include "kfspoof/model.hpp"
#include "kfspoof/kalman.hpp"
#include "kfspoof/separation.hpp"
#include "kfspoof/lp.hpp"
#include "kfspoof/planner.hpp"
#include "kfspoof/sim.hpp"
#include "kfspoof/io.hpp"
