#include "drn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "drn/errors.hpp"
#include "drn/rng.hpp"

namespace drn {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(field);
      field.clear();
    } else {
      field.push_back(ch);
    }
  }
  out.push_back(field);
  for (auto& f : out) {
    while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
    std::size_t start = 0;
    while (start < f.size() && f[start] == ' ') ++start;
    f = f.substr(start);
  }
  return out;
}

double parse_double(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("cannot parse '" + s + "' as a number in " + context);
  }
}

}  // namespace

int RawTable::column_index(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j)
    if (columns[j] == name) return static_cast<int>(j);
  return -1;
}

RawTable load_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open CSV file: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw ValidationError("empty CSV file: " + path);
  RawTable table;
  table.columns = split_csv_line(line);
  table.cells.resize(table.columns.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != table.columns.size())
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": expected " + std::to_string(table.columns.size()) +
                            " fields, got " + std::to_string(fields.size()));
    for (std::size_t j = 0; j < fields.size(); ++j)
      table.cells[j].push_back(std::move(fields[j]));
  }
  return table;
}

void write_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write CSV file: " + path);
  for (const auto& name : ds.feature_names) out << name << ",";
  out << "y\n";
  char buf[40];
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.X.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g,", ds.X(i, j));
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g\n", ds.y(i));
    out << buf;
  }
}

Dataset load_dataset_csv(const std::string& path) {
  RawTable table = load_csv_table(path);
  if (table.columns.empty() || table.columns.back() != "y")
    throw ValidationError(path + ": expected a trailing response column 'y'");
  Dataset ds;
  const std::size_t n = table.rows();
  const std::size_t p = table.columns.size() - 1;
  ds.feature_names.assign(table.columns.begin(), table.columns.end() - 1);
  ds.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  ds.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j)
      ds.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          parse_double(table.cells[j][i], "column " + table.columns[j]);
    ds.y(static_cast<Eigen::Index>(i)) =
        parse_double(table.cells[p][i], "response");
  }
  return ds;
}

void PreprocessRecipe::validate() const {
  if (response.empty()) throw ValidationError("recipe needs a response column");
  if (!(response_scale > 0.0))
    throw ValidationError("response_scale must be positive");
  if (!(train_fraction > 0.0 && val_fraction >= 0.0 &&
        train_fraction + val_fraction < 1.0))
    throw ValidationError("split fractions must satisfy 0 < train, train+val < 1");
}

PreprocessRecipe PreprocessRecipe::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open recipe file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("recipe " + path + ": " + e.what());
  }
  PreprocessRecipe r;
  r.response = j.at("response").get<std::string>();
  r.response_scale = j.value("response_scale", 1.0);
  if (j.contains("drop")) r.drop = j["drop"].get<std::vector<std::string>>();
  if (j.contains("numeric"))
    r.numeric = j["numeric"].get<std::vector<std::string>>();
  if (j.contains("categorical"))
    r.categorical = j["categorical"].get<std::vector<std::string>>();
  if (j.contains("ordinal_maps"))
    for (auto& [col, m] : j["ordinal_maps"].items())
      r.ordinal_maps[col] = m.get<std::map<std::string, double>>();
  r.standardize = j.value("standardize", true);
  r.train_fraction = j.value("train_fraction", 0.6);
  r.val_fraction = j.value("val_fraction", 0.2);
  r.seed = j.value("seed", 1ull);
  r.validate();
  return r;
}

Eigen::MatrixXd TabularEncoder::encode(const RawTable& table,
                                       const std::vector<int>& row_ids,
                                       int* unknown_level_events) const {
  const auto n = static_cast<Eigen::Index>(row_ids.size());
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(feature_names.size()));
  Eigen::Index col = 0;
  for (const auto& nc : numeric) {
    int src = table.column_index(nc.name);
    if (src < 0) throw ValidationError("missing column: " + nc.name);
    for (Eigen::Index i = 0; i < n; ++i) {
      double v = parse_double(table.cells[static_cast<std::size_t>(src)]
                                         [static_cast<std::size_t>(row_ids[i])],
                              "column " + nc.name);
      X(i, col) = (v - nc.mean) / nc.sd;
    }
    ++col;
  }
  for (const auto& oc : ordinal) {
    int src = table.column_index(oc.name);
    if (src < 0) throw ValidationError("missing column: " + oc.name);
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::string& cell =
          table.cells[static_cast<std::size_t>(src)]
                     [static_cast<std::size_t>(row_ids[i])];
      auto it = oc.mapping.find(cell);
      if (it == oc.mapping.end())
        throw ValidationError("ordinal column " + oc.name +
                              " has unmapped level '" + cell + "'");
      X(i, col) = (it->second - oc.mean) / oc.sd;
    }
    ++col;
  }
  for (const auto& cc : categorical) {
    int src = table.column_index(cc.name);
    if (src < 0) throw ValidationError("missing column: " + cc.name);
    const Eigen::Index width = static_cast<Eigen::Index>(cc.levels.size()) - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::string& cell =
          table.cells[static_cast<std::size_t>(src)]
                     [static_cast<std::size_t>(row_ids[i])];
      auto it = std::find(cc.levels.begin(), cc.levels.end(), cell);
      for (Eigen::Index k = 0; k < width; ++k) X(i, col + k) = 0.0;
      if (it == cc.levels.end()) {
        if (unknown_level_events) ++*unknown_level_events;
        std::cerr << "warning: unknown level '" << cell << "' in column "
                  << cc.name << "; encoding as all zeros\n";
      } else {
        auto level = static_cast<Eigen::Index>(it - cc.levels.begin());
        if (level > 0) X(i, col + level - 1) = 1.0;  // first level dropped
      }
    }
    col += width;
  }
  return X;
}

EncodedSplits preprocess_tabular(const RawTable& raw,
                                 const PreprocessRecipe& recipe) {
  recipe.validate();
  const int n = static_cast<int>(raw.rows());
  if (n < 3) throw ValidationError("too few rows to split");
  int y_col = raw.column_index(recipe.response);
  if (y_col < 0)
    throw ValidationError("response column not found: " + recipe.response);

  // Seeded 60/20/20-style split.
  Rng rng(recipe.seed);
  std::vector<int> perm = rng.permutation(n);
  int n_train = static_cast<int>(std::round(recipe.train_fraction * n));
  int n_val = static_cast<int>(std::round(recipe.val_fraction * n));
  n_train = std::max(1, std::min(n_train, n - 2));
  n_val = std::max(recipe.val_fraction > 0 ? 1 : 0, std::min(n_val, n - n_train - 1));
  std::vector<std::vector<int>> split_rows(3);
  split_rows[0].assign(perm.begin(), perm.begin() + n_train);
  split_rows[1].assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  split_rows[2].assign(perm.begin() + n_train + n_val, perm.end());

  // Fit the encoder on the training rows only.
  TabularEncoder enc;
  auto standardize_stats = [&](const std::vector<double>& values, double& mean,
                               double& sd) {
    mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    sd = std::sqrt(var / static_cast<double>(values.size()));
    if (!(sd > 0.0)) sd = 1.0;
    if (!recipe.standardize) {
      mean = 0.0;
      sd = 1.0;
    }
  };

  std::set<std::string> dropped(recipe.drop.begin(), recipe.drop.end());
  dropped.insert(recipe.response);
  for (const auto& name : recipe.numeric) {
    if (dropped.count(name)) continue;
    int src = raw.column_index(name);
    if (src < 0) throw ValidationError("missing numeric column: " + name);
    std::vector<double> values;
    values.reserve(split_rows[0].size());
    for (int r : split_rows[0])
      values.push_back(parse_double(
          raw.cells[static_cast<std::size_t>(src)][static_cast<std::size_t>(r)],
          "column " + name));
    TabularEncoder::NumericColumn nc{name, 0.0, 1.0};
    standardize_stats(values, nc.mean, nc.sd);
    enc.numeric.push_back(nc);
    enc.feature_names.push_back(name);
  }
  for (const auto& [name, mapping] : recipe.ordinal_maps) {
    if (dropped.count(name)) continue;
    int src = raw.column_index(name);
    if (src < 0) throw ValidationError("missing ordinal column: " + name);
    std::vector<double> values;
    for (int r : split_rows[0]) {
      const std::string& cell =
          raw.cells[static_cast<std::size_t>(src)][static_cast<std::size_t>(r)];
      auto it = mapping.find(cell);
      if (it == mapping.end())
        throw ValidationError("ordinal column " + name +
                              " has unmapped level '" + cell + "'");
      values.push_back(it->second);
    }
    TabularEncoder::OrdinalColumn oc{name, mapping, 0.0, 1.0};
    standardize_stats(values, oc.mean, oc.sd);
    enc.ordinal.push_back(oc);
    enc.feature_names.push_back(name);
  }
  for (const auto& name : recipe.categorical) {
    if (dropped.count(name)) continue;
    int src = raw.column_index(name);
    if (src < 0) throw ValidationError("missing categorical column: " + name);
    std::set<std::string> levels;
    for (int r : split_rows[0])
      levels.insert(
          raw.cells[static_cast<std::size_t>(src)][static_cast<std::size_t>(r)]);
    if (levels.size() < 2) continue;  // constant on train: nothing to encode
    TabularEncoder::CategoricalColumn cc;
    cc.name = name;
    cc.levels.assign(levels.begin(), levels.end());
    for (std::size_t k = 1; k < cc.levels.size(); ++k)
      enc.feature_names.push_back(name + "=" + cc.levels[k]);
    enc.categorical.push_back(std::move(cc));
  }
  if (enc.feature_names.empty())
    throw ValidationError("recipe produced no feature columns");

  EncodedSplits out;
  const char* names[3] = {"train", "val", "test"};
  Dataset* sets[3] = {&out.train, &out.val, &out.test};
  for (int s = 0; s < 3; ++s) {
    Dataset& ds = *sets[s];
    ds.split = names[s];
    ds.seed = recipe.seed;
    ds.feature_names = enc.feature_names;
    ds.X = enc.encode(raw, split_rows[static_cast<std::size_t>(s)]);
    ds.y.resize(static_cast<Eigen::Index>(split_rows[static_cast<std::size_t>(s)].size()));
    for (std::size_t i = 0; i < split_rows[static_cast<std::size_t>(s)].size(); ++i) {
      const std::string& cell =
          raw.cells[static_cast<std::size_t>(y_col)]
                   [static_cast<std::size_t>(split_rows[static_cast<std::size_t>(s)][i])];
      ds.y(static_cast<Eigen::Index>(i)) =
          parse_double(cell, "response") * recipe.response_scale;
    }
  }
  out.encoder = std::move(enc);
  out.split_rows = std::move(split_rows);
  return out;
}

}  // namespace drn
