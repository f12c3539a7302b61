#pragma once

#include "nodeval/agreement.hpp"
#include "nodeval/cohort.hpp"
#include "nodeval/error.hpp"
#include "nodeval/image.hpp"
#include "nodeval/normal.hpp"
#include "nodeval/preprocess.hpp"
#include "nodeval/report.hpp"
#include "nodeval/rng.hpp"
#include "nodeval/roc.hpp"
#include "nodeval/significance.hpp"
#include "nodeval/synthcohort.hpp"
#include "nodeval/tinycnn.hpp"
#include "nodeval/version.hpp"
