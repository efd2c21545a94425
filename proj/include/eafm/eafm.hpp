#pragma once

#include "eafm/checkpoint.hpp"
#include "eafm/entgnn.hpp"
#include "eafm/error.hpp"
#include "eafm/io.hpp"
#include "eafm/kg.hpp"
#include "eafm/matcher.hpp"
#include "eafm/model.hpp"
#include "eafm/optimizer.hpp"
#include "eafm/pipeline.hpp"
#include "eafm/relgnn.hpp"
#include "eafm/relgraph.hpp"
#include "eafm/synth.hpp"
