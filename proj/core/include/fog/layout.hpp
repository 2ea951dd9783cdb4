#pragma once

#include <cstdint>

#include "fog/ir.hpp"

namespace fog {

enum class Granularity { FUNCTION, BLOCK };
const char* granularity_name(Granularity g);

// Shuffles the serialized block order. The entry function's entry block stays
// first; broken fall-throughs are repaired with JMPs.
Program randomize_layout(Program p, Granularity g, std::uint64_t seed);

// Negates each selected BR and swaps its taken and fall-through targets. BRs
// that carry a fake edge are left alone.
Program flip_branches(Program p, std::uint64_t seed, double probability = 50.0);

// Fraction of serialized neighbours that belong to the same function.
double same_function_adjacency(const Program& p);

}  // namespace fog
