#pragma once

#include "mihash/convergence.hpp"
#include "mihash/encoder.hpp"
#include "mihash/error.hpp"
#include "mihash/io.hpp"
#include "mihash/mutual_info.hpp"
#include "mihash/objectives.hpp"
#include "mihash/retrieval.hpp"
#include "mihash/synthetic.hpp"
#include "mihash/tensor.hpp"
#include "mihash/training.hpp"
