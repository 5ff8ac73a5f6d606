#include "infkit/data.hpp"

#include "infkit/io.hpp"
#include "infkit/rng.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

namespace infkit {

namespace {

// 8x8 glyphs; '#' marks lit pixels (value 200 before noise).
constexpr std::array<std::array<const char*, 8>, 10> kGlyphs = {{
    {"..####..", ".#....#.", ".#...##.", ".#..#.#.", ".#.#..#.", ".##...#.", ".#....#.",
     "..####.."},
    {"...##...", "..###...", "...##...", "...##...", "...##...", "...##...", "...##...",
     "..####.."},
    {"..####..", ".#....#.", "......#.", ".....#..", "....#...", "...#....", "..#.....",
     ".######."},
    {"..####..", ".#....#.", "......#.", "...###..", "......#.", "......#.", ".#....#.",
     "..####.."},
    {"....##..", "...#.#..", "..#..#..", ".#...#..", ".######.", ".....#..", ".....#..",
     ".....#.."},
    {".######.", ".#......", ".#......", ".#####..", "......#.", "......#.", ".#....#.",
     "..####.."},
    {"..####..", ".#......", ".#......", ".#####..", ".#....#.", ".#....#.", ".#....#.",
     "..####.."},
    {".######.", "......#.", ".....#..", "....#...", "...#....", "...#....", "...#....",
     "...#...."},
    {"..####..", ".#....#.", ".#....#.", "..####..", ".#....#.", ".#....#.", ".#....#.",
     "..####.."},
    {"..####..", ".#....#.", ".#....#.", "..#####.", "......#.", "......#.", "......#.",
     "..####.."},
}};

LabeledSet empty_set(Index count, Index dim) {
  LabeledSet set;
  set.inputs.resize(count, dim);
  set.labels.resize(count);
  set.upweight = Vector::Zero(count);
  return set;
}

void fill_blob_split(LabeledSet& set, const Matrix& centers, const BlobsConfig& cfg,
                     Index per_class, rng::Stream& stream) {
  Index row = 0;
  for (int c = 0; c < cfg.classes; ++c) {
    for (Index i = 0; i < per_class; ++i, ++row) {
      for (Index j = 0; j < cfg.dim; ++j) {
        set.inputs(row, j) = centers(c, j) + cfg.spread * stream.normal();
      }
      set.labels[row] = static_cast<double>(c);
    }
  }
}

void fill_digit_split(LabeledSet& set, const DigitsConfig& cfg, Index per_class,
                      rng::Stream& stream) {
  Index row = 0;
  for (int c = 0; c < kDigitClasses; ++c) {
    for (Index i = 0; i < per_class; ++i, ++row) {
      const double intensity = 200.0 * (1.0 + cfg.jitter * stream.normal());
      for (Index r = 0; r < kDigitSide; ++r) {
        for (Index col = 0; col < kDigitSide; ++col) {
          const bool lit = kGlyphs[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)]
                                  [static_cast<std::size_t>(col)] == '#';
          double value = (lit ? intensity : 0.0) + cfg.noise * stream.normal();
          set.inputs(row, r * kDigitSide + col) = std::clamp(value, 0.0, 255.0);
        }
      }
      set.labels[row] = static_cast<double>(c);
    }
  }
}

}  // namespace

Dataset make_blobs(const BlobsConfig& cfg, std::uint64_t seed) {
  if (cfg.classes < 2 || cfg.dim < 1 || cfg.train_per_class < 1 || cfg.test_per_class < 1) {
    throw DomainError("make_blobs: invalid configuration");
  }
  rng::Stream center_stream(seed, "blob-centers");
  Matrix centers(cfg.classes, cfg.dim);
  for (int c = 0; c < cfg.classes; ++c) {
    Vector dir(cfg.dim);
    for (Index j = 0; j < cfg.dim; ++j) dir[j] = center_stream.normal();
    dir.normalize();
    centers.row(c) = cfg.separation * dir.transpose();
  }

  Dataset data;
  data.classes = cfg.classes;
  data.train = empty_set(cfg.classes * cfg.train_per_class, cfg.dim);
  data.test = empty_set(cfg.classes * cfg.test_per_class, cfg.dim);
  rng::Stream train_stream(seed, "blob-train");
  rng::Stream test_stream(seed, "blob-test");
  fill_blob_split(data.train, centers, cfg, cfg.train_per_class, train_stream);
  fill_blob_split(data.test, centers, cfg, cfg.test_per_class, test_stream);
  return data;
}

Dataset make_digits(const DigitsConfig& cfg, std::uint64_t seed) {
  if (cfg.train_per_class < 1 || cfg.test_per_class < 1) {
    throw DomainError("make_digits: invalid configuration");
  }
  Dataset data;
  data.classes = kDigitClasses;
  data.train = empty_set(kDigitClasses * cfg.train_per_class, kDigitSide * kDigitSide);
  data.test = empty_set(kDigitClasses * cfg.test_per_class, kDigitSide * kDigitSide);
  rng::Stream train_stream(seed, "digits-train");
  rng::Stream test_stream(seed, "digits-test");
  fill_digit_split(data.train, cfg, cfg.train_per_class, train_stream);
  fill_digit_split(data.test, cfg, cfg.test_per_class, test_stream);
  return data;
}

namespace {

// One toy row. `hetero` swaps the echo pair for amplified independent noise
// and leaks channel 0 into the target with the configured sign.
void fill_toy_row(LabeledSet& set, Index row, const ToyConfig& cfg, const Vector& w,
                  bool hetero, rng::Stream& stream) {
  const Index signal_dim = cfg.dim - 2;
  Vector x(cfg.dim);
  for (Index j = 2; j < cfg.dim; ++j) x[j] = stream.normal();
  const double s = x.tail(signal_dim).sum() / std::sqrt(static_cast<double>(signal_dim));
  double target = w.dot(x);  // echo entries of w are zero
  if (hetero) {
    x[0] = cfg.amplify * stream.normal();
    x[1] = cfg.amplify * stream.normal();
    target += (cfg.flip_sign ? -1.0 : 1.0) * cfg.leak * x[0];
    set.upweight[row] = 1.0;
  } else {
    const double spread = std::sqrt(1.0 - cfg.echo * cfg.echo);
    x[0] = cfg.echo * s + spread * stream.normal();
    x[1] = cfg.echo * s + spread * stream.normal();
  }
  set.inputs.row(row) = x.transpose();
  set.labels[row] = target + cfg.noise * stream.normal();
}

}  // namespace

ToyRegression make_toy_regression(const ToyConfig& cfg, std::uint64_t seed) {
  if (cfg.count < 2 || cfg.dim < 3 || cfg.hetero_fraction < 0 || cfg.hetero_fraction >= 1 ||
      cfg.echo <= -1.0 || cfg.echo >= 1.0) {
    throw DomainError("make_toy_regression: invalid configuration");
  }
  ToyRegression toy;
  rng::Stream wstream(seed, "toy-weights");
  Vector signal_w = wstream.normal_vector(cfg.dim - 2);
  signal_w *= cfg.weight_scale / signal_w.norm();
  toy.true_weights = Vector::Zero(cfg.dim);
  toy.true_weights.tail(cfg.dim - 2) = signal_w;

  rng::Stream rows(seed, "toy-rows");
  const Index hetero_count = static_cast<Index>(cfg.hetero_fraction * cfg.count);
  toy.hetero_rows = rows.sample(cfg.count, hetero_count);
  std::sort(toy.hetero_rows.begin(), toy.hetero_rows.end());

  rng::Stream train_stream(seed, "toy-train");
  toy.data.classes = 0;
  toy.data.train = empty_set(cfg.count, cfg.dim);
  std::vector<bool> is_hetero(static_cast<std::size_t>(cfg.count), false);
  for (Index r : toy.hetero_rows) is_hetero[static_cast<std::size_t>(r)] = true;
  for (Index i = 0; i < cfg.count; ++i) {
    fill_toy_row(toy.data.train, i, cfg, toy.true_weights,
                 is_hetero[static_cast<std::size_t>(i)], train_stream);
  }

  // Homogeneous-population test split.
  rng::Stream test_stream(seed, "toy-test");
  toy.data.test = empty_set(cfg.test_count, cfg.dim);
  for (Index i = 0; i < cfg.test_count; ++i) {
    fill_toy_row(toy.data.test, i, cfg, toy.true_weights, false, test_stream);
  }
  return toy;
}

namespace {

void add_pattern_row(LabeledSet& set, Index row, const BackdoorSpec& spec) {
  const Index dim = set.inputs.cols();
  if (dim != spec.side * spec.side) {
    throw ShapeError("backdoor pattern expects " + std::to_string(spec.side * spec.side) +
                     " inputs, got " + std::to_string(dim));
  }
  for (Index r = 0; r < spec.side; ++r) {
    for (Index c = 0; c < spec.side; ++c) {
      if ((r + c) % 2 == 0) {
        double& px = set.inputs(row, r * spec.side + c);
        px = std::clamp(px + spec.level, spec.clip_lo, spec.clip_hi);
      }
    }
  }
}

}  // namespace

std::vector<Index> implant_backdoor(LabeledSet& set, const BackdoorSpec& spec,
                                    std::uint64_t seed) {
  if (spec.poison_fraction <= 0 || spec.poison_fraction > 1) {
    throw DomainError("implant_backdoor: poison fraction out of range");
  }
  rng::Stream stream(seed, "backdoor-rows");
  const Index count = static_cast<Index>(spec.poison_fraction * set.size());
  std::vector<Index> rows = stream.sample(set.size(), std::max<Index>(count, 1));
  std::sort(rows.begin(), rows.end());
  for (Index r : rows) {
    add_pattern_row(set, r, spec);
    set.labels[r] = static_cast<double>(spec.target_label);
    set.upweight[r] = 1.0;
  }
  return rows;
}

void apply_backdoor_pattern(LabeledSet& set, const BackdoorSpec& spec) {
  for (Index i = 0; i < set.size(); ++i) add_pattern_row(set, i, spec);
}

void scale_inputs(Dataset& data, double factor) {
  data.train.inputs *= factor;
  data.test.inputs *= factor;
}

std::vector<Index> rows_with_label(const LabeledSet& set, double label) {
  std::vector<Index> rows;
  for (Index i = 0; i < set.size(); ++i) {
    if (set.labels[i] == label) rows.push_back(i);
  }
  return rows;
}

LabeledSet load_csv_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error("'" + path + "' is empty");

  // Header: label,x0,...,x{d-1}
  Index dim = -1;  // count of x columns
  {
    std::stringstream header(line);
    std::string cell;
    if (!std::getline(header, cell, ',') || cell != "label") {
      throw Error("'" + path + "' must start with a 'label' column");
    }
    dim = 0;
    while (std::getline(header, cell, ',')) ++dim;
    if (dim == 0) throw Error("'" + path + "' has no feature columns");
  }

  std::vector<double> labels;
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    Index col = 0;
    while (std::getline(row, cell, ',')) {
      double v = 0;
      try {
        v = std::stod(cell);
      } catch (const std::exception&) {
        throw Error("'" + path + "' has a non-numeric cell '" + cell + "'");
      }
      if (col == 0) {
        labels.push_back(v);
      } else {
        values.push_back(v);
      }
      ++col;
    }
    if (col != dim + 1) {
      throw Error("'" + path + "' row has " + std::to_string(col) + " cells, expected " +
                  std::to_string(dim + 1));
    }
  }

  LabeledSet set = empty_set(static_cast<Index>(labels.size()), dim);
  for (Index i = 0; i < set.size(); ++i) {
    set.labels[i] = labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < dim; ++j) {
      set.inputs(i, j) = values[static_cast<std::size_t>(i * dim + j)];
    }
  }
  return set;
}

void save_csv_set(const std::string& path, const LabeledSet& set) {
  std::ostringstream out;
  out << "label";
  for (Index j = 0; j < set.inputs.cols(); ++j) out << ",x" << j;
  out << "\n";
  for (Index i = 0; i < set.size(); ++i) {
    out << io::format_double(set.labels[i]);
    for (Index j = 0; j < set.inputs.cols(); ++j) {
      out << "," << io::format_double(set.inputs(i, j));
    }
    out << "\n";
  }
  io::atomic_write_bytes(path, out.str());
}

}  // namespace infkit
