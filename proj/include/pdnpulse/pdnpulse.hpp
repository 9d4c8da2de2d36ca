#pragma once

// Umbrella header: the full toolkit in one include.

#include "pdnpulse/boards.hpp"
#include "pdnpulse/campaign.hpp"
#include "pdnpulse/convert.hpp"
#include "pdnpulse/detector.hpp"
#include "pdnpulse/frechet.hpp"
#include "pdnpulse/io.hpp"
#include "pdnpulse/netlist.hpp"
#include "pdnpulse/rng.hpp"
#include "pdnpulse/solver.hpp"
#include "pdnpulse/touchstone.hpp"
#include "pdnpulse/version.hpp"
