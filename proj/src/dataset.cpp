#include "scgn/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "scgn/errors.hpp"

namespace scgn {

std::vector<std::size_t> LabeledDataset::indices_of(std::size_t class_id, Partition part) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == class_id && partition[i] == part) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> LabeledDataset::indices_in(const std::vector<std::size_t>& classes,
                                                    Partition part) const {
  std::vector<bool> wanted(num_classes(), false);
  for (std::size_t c : classes) {
    if (c >= wanted.size()) throw DomainError("indices_in: class id out of range");
    wanted[c] = true;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (wanted[labels[i]] && partition[i] == part) out.push_back(i);
  }
  return out;
}

void LabeledDataset::validate() const {
  if (features.rows() != labels.size() || partition.size() != labels.size()) {
    throw DomainError("LabeledDataset: features, labels and partition lengths differ");
  }
  std::vector<std::size_t> counts(num_classes(), 0);
  for (std::size_t label : labels) {
    if (label >= counts.size()) throw DomainError("LabeledDataset: label out of range");
    ++counts[label];
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) throw DomainError("LabeledDataset: class " + std::to_string(c) + " is empty");
  }
  if (!features.all_finite()) throw DomainError("LabeledDataset: non-finite feature value");
}

namespace {

void check_spec(const SyntheticSpec& spec) {
  if (spec.num_classes == 0 || spec.input_dim == 0 || spec.samples_per_class == 0) {
    throw DomainError("generate_synthetic_dataset: counts must be positive");
  }
  if (!(spec.class_separation > 0.0) || !(spec.intra_spread > 0.0)) {
    throw DomainError("generate_synthetic_dataset: class_separation and intra_spread must be > 0");
  }
  if (!(spec.test_fraction >= 0.0 && spec.test_fraction < 1.0)) {
    throw DomainError("generate_synthetic_dataset: test_fraction must be in [0, 1)");
  }
}

Tensor2D draw_means(const SyntheticSpec& spec, RngStream& rng) {
  Tensor2D means(spec.num_classes, spec.input_dim);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    auto row = means.row(c);
    double norm_sq = 0.0;
    do {
      norm_sq = 0.0;
      for (double& v : row) {
        v = rng.normal();
        norm_sq += v * v;
      }
    } while (norm_sq == 0.0);
    const double s = spec.class_separation / std::sqrt(norm_sq);
    for (double& v : row) v *= s;
  }
  return means;
}

std::size_t test_count(std::size_t n, double fraction) {
  auto t = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  return std::min(t, n - 1);
}

}  // namespace

Tensor2D synthetic_class_means(const SyntheticSpec& spec, RngStream rng) {
  check_spec(spec);
  return draw_means(spec, rng);
}

LabeledDataset generate_synthetic_dataset(const SyntheticSpec& spec, RngStream& rng) {
  check_spec(spec);
  const Tensor2D means = draw_means(spec, rng);
  const std::size_t n = spec.num_classes * spec.samples_per_class;
  const std::size_t n_test = test_count(spec.samples_per_class, spec.test_fraction);

  LabeledDataset data;
  data.features = Tensor2D(n, spec.input_dim);
  data.labels.reserve(n);
  data.partition.reserve(n);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    data.class_names.push_back("class_" + std::to_string(c));
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      const std::size_t row = data.labels.size();
      for (std::size_t d = 0; d < spec.input_dim; ++d) {
        data.features(row, d) = means(c, d) + spec.intra_spread * rng.normal();
      }
      data.labels.push_back(c);
      data.partition.push_back(s + n_test >= spec.samples_per_class ? Partition::kTest
                                                                     : Partition::kTrain);
    }
  }
  return data;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

// strtod also takes a leading '+', which from_chars rejects.
bool parse_real(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  const std::string buf(s);
  char* end = nullptr;
  out = std::strtod(buf.c_str(), &end);
  return end == buf.c_str() + buf.size() && std::isfinite(out);
}

}  // namespace

LabeledDataset load_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature file '" + path.string() + "'");

  LabeledDataset data;
  std::size_t dim = 0;
  std::size_t classes = 0;
  bool have_header = false;
  std::size_t header_line = 0;
  std::vector<double> values;
  std::string line;
  std::size_t lineno = 0;

  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view s = trim(line);
    if (s.empty() || s.front() == '#') continue;

    if (!have_header) {
      std::istringstream hs{std::string(s)};
      std::string a, b, extra;
      if (!(hs >> a >> b) || (hs >> extra) || a.rfind("dim=", 0) != 0 ||
          b.rfind("classes=", 0) != 0 || !parse_number(std::string_view(a).substr(4), dim) ||
          !parse_number(std::string_view(b).substr(8), classes) || dim == 0 || classes == 0) {
        throw ParseError("malformed header, expected 'dim=<D> classes=<C>'", lineno);
      }
      have_header = true;
      header_line = lineno;
      continue;
    }

    std::size_t label = 0;
    std::size_t field = 0;
    std::size_t start = 0;
    const std::size_t before = values.size();
    while (true) {
      const std::size_t comma = s.find(',', start);
      const std::string_view tok =
          s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
      if (field == 0) {
        if (!parse_number(tok, label)) throw ParseError("invalid label '" + std::string(tok) + "'", lineno);
        if (label >= classes) {
          throw ParseError("label " + std::to_string(label) + " out of range for classes=" +
                               std::to_string(classes),
                           lineno);
        }
      } else {
        double v = 0.0;
        if (!parse_real(tok, v)) throw ParseError("invalid value '" + std::string(tok) + "'", lineno);
        values.push_back(v);
      }
      ++field;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (values.size() - before != dim) {
      throw ParseError("expected " + std::to_string(dim) + " values, found " +
                           std::to_string(values.size() - before),
                       lineno);
    }
    data.labels.push_back(label);
  }

  if (!have_header) throw ParseError("empty feature file (no header)", lineno == 0 ? 1 : lineno);
  if (data.labels.empty()) throw ParseError("feature file has no samples", lineno);

  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t l : data.labels) ++counts[l];
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] == 0) {
      throw ParseError("class " + std::to_string(c) + " declared but has no samples", header_line);
    }
  }

  data.features = Tensor2D(data.labels.size(), dim, std::move(values));
  data.partition.assign(data.labels.size(), Partition::kTrain);
  for (std::size_t c = 0; c < classes; ++c) data.class_names.push_back("class_" + std::to_string(c));
  return data;
}

void write_feature_file(const LabeledDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write feature file '" + path.string() + "'");
  out << "dim=" << data.input_dim() << " classes=" << data.num_classes() << "\n";
  char buf[64];
  for (std::size_t i = 0; i < data.num_samples(); ++i) {
    out << data.labels[i];
    for (double v : data.features.row(i)) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("failed writing feature file '" + path.string() + "'");
}

void assign_holdout(LabeledDataset& data, double fraction, RngStream& rng) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw DomainError("assign_holdout: fraction must be in [0, 1)");
  data.partition.assign(data.labels.size(), Partition::kTrain);
  for (std::size_t c = 0; c < data.num_classes(); ++c) {
    std::vector<std::size_t> idx = data.indices_of(c, Partition::kTrain);
    if (idx.empty()) continue;
    rng.shuffle(std::span<std::size_t>(idx));
    const std::size_t n_test = test_count(idx.size(), fraction);
    for (std::size_t k = 0; k < n_test; ++k) data.partition[idx[k]] = Partition::kTest;
  }
}

}  // namespace scgn
