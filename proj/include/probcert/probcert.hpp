#pragma once

#include "probcert/model.hpp"
#include "probcert/spec_builder.hpp"
#include "probcert/gaussian.hpp"
#include "probcert/interval.hpp"
#include "probcert/dual_bound.hpp"
#include "probcert/optimizer.hpp"
#include "probcert/mc_oracle.hpp"
#include "probcert/io.hpp"
#include "probcert/sweep.hpp"
