#pragma once

#include "rmc/attack.hpp"
#include "rmc/curve.hpp"
#include "rmc/data.hpp"
#include "rmc/evalkit.hpp"
#include "rmc/gradcheck.hpp"
#include "rmc/io.hpp"
#include "rmc/model.hpp"
#include "rmc/numcore.hpp"
#include "rmc/pipeline.hpp"
#include "rmc/train.hpp"
