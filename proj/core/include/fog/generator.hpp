#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fog/ir.hpp"

namespace fog {

struct SpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BenchmarkSpec {
  std::uint64_t seed = 1;
  std::vector<int> objects_per_archive = {3, 2, 1};
  int functions_per_object = 13;
  int min_segments = 4, max_segments = 10;  // control-flow segments per function
  int min_block_insns = 2, max_block_insns = 7;
  int layers = 3;               // call-graph depth below main
  int duplicates = 24;          // planted snippet families
  int duplicate_copies = 3;     // copies of each family
  int duplicate_spread = 2;     // distinct archives each family touches
  std::vector<double> coverage = {0.75, 0.55, 0.35};  // per-archive share of blocks run by training inputs
  int training_inputs = 8, measurement_inputs = 10;
  int min_input_values = 6, max_input_values = 14;

  int archives() const { return static_cast<int>(objects_per_archive.size()); }
};

// The standard desk-scale benchmark: 3 archives of uneven size, ~5k instructions.
BenchmarkSpec standard_benchmark(std::uint64_t seed = 1);
// Small programs for bulk equivalence checks.
BenchmarkSpec small_benchmark(std::uint64_t seed);

struct Benchmark {
  Program program;
  std::vector<std::vector<Word>> training, measurement;
  std::vector<std::string> hot_functions;  // layer-0 functions reachable from training inputs
};

Benchmark generate_benchmark(const BenchmarkSpec& spec);

}  // namespace fog
