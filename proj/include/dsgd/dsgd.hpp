#pragma once

#include "dsgd/common.hpp"
#include "dsgd/quadrature.hpp"
#include "dsgd/mesh.hpp"
#include "dsgd/basis.hpp"
#include "dsgd/space.hpp"
#include "dsgd/stabilization.hpp"
#include "dsgd/discretisation.hpp"
#include "dsgd/manufactured.hpp"
#include "dsgd/schemes.hpp"
#include "dsgd/gd_metrics.hpp"
#include "dsgd/verify.hpp"
#include "dsgd/study.hpp"
