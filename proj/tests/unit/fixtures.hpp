#pragma once

#include "idg/encoder_risk.hpp"
#include "idg/world.hpp"

namespace fx {

// Two domains {x0,x1} and {x2,x3}; x0,x2 carry label 0, x1,x3 label 1.
inline idg::World four_input(idg::LossSpec loss = idg::LossSpec::zero_one()) {
  using namespace idg;
  FiniteDist pd({0.5, 0.5});
  CondKernel pxd(2, 4, {0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5});
  CondKernel pyx(4, 2, {1, 0, 0, 1, 1, 0, 0, 1});
  return World(pd, pxd, pyx, product(pd, pd), loss);
}

inline idg::Encoder bucketing() { return idg::Encoder::from_map({0, 1, 0, 1}, 2); }

}  // namespace fx
