#pragma once

#include "shallowtree/bnb2.hpp"
#include "shallowtree/bnb3.hpp"
#include "shallowtree/bounds.hpp"
#include "shallowtree/dataset.hpp"
#include "shallowtree/error.hpp"
#include "shallowtree/heuristics.hpp"
#include "shallowtree/loss.hpp"
#include "shallowtree/synthetic.hpp"
#include "shallowtree/tree.hpp"
