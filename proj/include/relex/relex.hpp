#pragma once

#include "relex/common.hpp"
#include "relex/dataset.hpp"
#include "relex/evaluation.hpp"
#include "relex/metrics.hpp"
#include "relex/model.hpp"
#include "relex/model_io.hpp"
#include "relex/numerics.hpp"
#include "relex/report_io.hpp"
