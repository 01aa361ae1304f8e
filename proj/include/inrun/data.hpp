#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "inrun/model.hpp"

namespace inrun {

enum class DataKind { gaussian_mixture, xor_rings };
std::string to_string(DataKind k);
DataKind parse_data_kind(const std::string& s);

struct DataSpec {
  DataKind kind = DataKind::gaussian_mixture;
  std::size_t n = 2000;
  std::size_t dim = 10;
  double flip_fraction = 0.0;
  double val_fraction = 0.2;
  double test_fraction = 0.0;
  double separation = 2.0;  // gaussian_mixture: distance between the two class means
  double scale_spread = 0.0;  // feature j is scaled by 10^(spread * (j / (dim - 1) - 1/2))
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const DataSpec&) const = default;
};

/// Two-class synthetic data. Splits are drawn first; exactly round(flip_fraction * n)
/// training rows then get the opposite label and are marked in `flipped`.
Dataset generate(const DataSpec& spec);

/// CSV with header f0..f{d-1},label[,split][,flipped]. Doubles use %.17g.
void write_csv(const Dataset& data, std::ostream& out);
void write_csv(const Dataset& data, const std::string& path);

/// Reads the format above. Without a split column every row is training
/// data; `num_classes` defaults to max label + 1.
Dataset read_csv(std::istream& in, const std::string& name = "<stream>");
Dataset read_csv(const std::string& path);

}  // namespace inrun
