#pragma once

#include <string>

#include "vrl/sim.hpp"

namespace vrl {

// Binary P6 PPM, maxval 255, [-1,1] mapped linearly onto [0,255].
void write_ppm(const std::string& path, const Frame& frame);
Frame read_ppm(const std::string& path);

// Binary P5 PGM with class indices as gray levels.
void write_pgm(const std::string& path, const SegMap& seg);
SegMap read_pgm(const std::string& path);

}  // namespace vrl
