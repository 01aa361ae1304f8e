#include "inrun/data.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "inrun/error.hpp"

namespace inrun {

std::string to_string(DataKind k) { return k == DataKind::gaussian_mixture ? "gaussian_mixture" : "xor_rings"; }

DataKind parse_data_kind(const std::string& s) {
  if (s == "gaussian_mixture") return DataKind::gaussian_mixture;
  if (s == "xor_rings") return DataKind::xor_rings;
  throw ConfigError("unknown dataset kind '" + s + "'");
}

void DataSpec::validate() const {
  if (n < 10) throw ConfigError("dataset n must be >= 10");
  if (dim < 1) throw ConfigError("dataset dim must be >= 1");
  if (kind == DataKind::xor_rings && dim < 2) throw ConfigError("xor_rings needs dim >= 2");
  if (!(flip_fraction >= 0.0 && flip_fraction <= 0.5)) throw ConfigError("flip_fraction must lie in [0, 0.5]");
  if (!(val_fraction >= 0.0 && test_fraction >= 0.0 && val_fraction + test_fraction < 1.0))
    throw ConfigError("val_fraction + test_fraction must lie in [0, 1)");
  if (!(separation >= 0.0)) throw ConfigError("separation must be >= 0");
  if (!(std::abs(scale_spread) <= 12.0)) throw ConfigError("scale_spread must lie in [-12, 12]");
}

Dataset generate(const DataSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);
  Dataset d;
  d.num_classes = 2;
  d.features = Tensor({spec.n, spec.dim});
  d.classes.assign(spec.n, 0);
  d.flipped.assign(spec.n, false);
  d.split.assign(spec.n, Split::train);

  Rng draw = root.derive({1});
  const double shift = 0.5 * spec.separation / std::sqrt(static_cast<double>(spec.dim));
  for (std::size_t i = 0; i < spec.n; ++i) {
    auto row = d.features.row(i);
    if (spec.kind == DataKind::gaussian_mixture) {
      const int y = static_cast<int>(draw.below(2));
      for (auto& x : row) x = (y == 1 ? shift : -shift) + draw.gaussian();
      d.classes[i] = y;
    } else {
      for (auto& x : row) x = 2.0 * draw.uniform() - 1.0;
      const double r = std::hypot(row[0], row[1]);
      d.classes[i] = ((row[0] * row[1] > 0.0) != (r < 0.5)) ? 1 : 0;
    }
  }
  if (spec.scale_spread != 0.0 && spec.dim > 1) {
    for (std::size_t j = 0; j < spec.dim; ++j) {
      const double pos = static_cast<double>(j) / static_cast<double>(spec.dim - 1) - 0.5;
      const double s = std::pow(10.0, spec.scale_spread * pos);
      for (std::size_t i = 0; i < spec.n; ++i) d.features.at(i, j) *= s;
    }
  }

  Rng split_rng = root.derive({2});
  const auto order = permutation(split_rng, spec.n);
  const auto n_val = static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(spec.n)));
  const auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(spec.n)));
  for (std::size_t k = 0; k < spec.n; ++k) {
    if (k < n_val)
      d.split[order[k]] = Split::val;
    else if (k < n_val + n_test)
      d.split[order[k]] = Split::test;
  }

  const auto train = d.indices(Split::train);
  const auto n_flip = static_cast<std::size_t>(std::llround(spec.flip_fraction * static_cast<double>(spec.n)));
  if (n_flip > train.size()) throw ConfigError("flip_fraction asks for more flips than there are training rows");
  Rng flip_rng = root.derive({3});
  const auto pick = permutation(flip_rng, train.size());
  for (std::size_t k = 0; k < n_flip; ++k) {
    const std::size_t i = train[pick[k]];
    d.classes[i] = 1 - d.classes[i];
    d.flipped[i] = true;
  }
  d.validate();
  return d;
}

namespace {

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Split parse_split(const std::string& s, const std::string& where) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError(where + ": unknown split '" + s + "'");
}

}  // namespace

void write_csv(const Dataset& data, std::ostream& out) {
  data.validate();
  if (!data.is_classification()) throw DimensionError("write_csv supports classification datasets only");
  for (std::size_t j = 0; j < data.dim(); ++j) out << 'f' << j << ',';
  out << "label,split,flipped\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double x : data.features.row(i)) out << format_double(x) << ',';
    out << data.classes[i] << ',' << to_string(data.split[i]) << ','
        << (!data.flipped.empty() && data.flipped[i] ? 1 : 0) << '\n';
  }
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  write_csv(data, f);
  if (!f) throw Error("failed writing '" + path + "'");
}

Dataset read_csv(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(name + ": empty file");
  const auto header = split_fields(line);
  std::size_t dim = 0;
  while (dim < header.size() && header[dim] == "f" + std::to_string(dim)) ++dim;
  if (dim == 0) throw ConfigError(name + ": header must start with f0");
  long label_col = -1, split_col = -1, flip_col = -1;
  for (std::size_t c = dim; c < header.size(); ++c) {
    if (header[c] == "label") label_col = static_cast<long>(c);
    else if (header[c] == "split") split_col = static_cast<long>(c);
    else if (header[c] == "flipped") flip_col = static_cast<long>(c);
    else throw ConfigError(name + ": unknown column '" + header[c] + "'");
  }
  if (label_col < 0) throw ConfigError(name + ": missing label column");

  std::vector<double> values;
  Dataset d;
  int max_label = -1;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_fields(line);
    const std::string where = name + ":" + std::to_string(lineno);
    if (f.size() != header.size()) throw ConfigError(where + ": expected " + std::to_string(header.size()) + " fields");
    for (std::size_t j = 0; j < dim; ++j) {
      char* end = nullptr;
      const double x = std::strtod(f[j].c_str(), &end);
      if (f[j].empty() || *end != '\0' || !std::isfinite(x)) throw ConfigError(where + ": bad feature '" + f[j] + "'");
      values.push_back(x);
    }
    char* end = nullptr;
    const long y = std::strtol(f[label_col].c_str(), &end, 10);
    if (f[label_col].empty() || *end != '\0' || y < 0) throw ConfigError(where + ": bad label '" + f[label_col] + "'");
    d.classes.push_back(static_cast<int>(y));
    max_label = std::max(max_label, static_cast<int>(y));
    d.split.push_back(split_col >= 0 ? parse_split(f[split_col], where) : Split::train);
    if (flip_col >= 0) {
      if (f[flip_col] != "0" && f[flip_col] != "1") throw ConfigError(where + ": flipped must be 0 or 1");
      d.flipped.push_back(f[flip_col] == "1");
    }
  }
  const std::size_t n = d.classes.size();
  if (n == 0) throw ConfigError(name + ": no data rows");
  d.features = Tensor({n, dim}, std::move(values));
  d.num_classes = static_cast<std::size_t>(std::max(max_label + 1, 2));
  d.validate();
  return d;
}

Dataset read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open '" + path + "'");
  return read_csv(f, path);
}

}  // namespace inrun
