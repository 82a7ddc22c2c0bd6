#ifndef SEGTTA_SEGTTA_HPP
#define SEGTTA_SEGTTA_HPP

#include "segtta/augment.hpp"
#include "segtta/backend.hpp"
#include "segtta/config.hpp"
#include "segtta/edt.hpp"
#include "segtta/error.hpp"
#include "segtta/fusion.hpp"
#include "segtta/metrics.hpp"
#include "segtta/nifti.hpp"
#include "segtta/phantom.hpp"
#include "segtta/pipeline.hpp"
#include "segtta/report.hpp"
#include "segtta/rng.hpp"
#include "segtta/types.hpp"

#endif  // SEGTTA_SEGTTA_HPP
