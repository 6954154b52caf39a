#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace drn {

// Encoded, model-ready data for one split.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> feature_names;
  std::string split;  // train / val / test
  std::uint64_t seed = 0;
};

// Raw CSV contents, column-major strings.
struct RawTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> cells;  // cells[col][row]

  std::size_t rows() const { return cells.empty() ? 0 : cells[0].size(); }
  int column_index(const std::string& name) const;
};

RawTable load_csv_table(const std::string& path);

void write_dataset_csv(const Dataset& ds, const std::string& path);
Dataset load_dataset_csv(const std::string& path);

// Declarative preprocessing: column roles, verbatim ordinal maps, one-hot
// with first-level drop, train-fitted standardisation, seeded split.
struct PreprocessRecipe {
  std::string response;
  double response_scale = 1.0;
  std::vector<std::string> drop;
  std::vector<std::string> numeric;
  std::vector<std::string> categorical;
  std::map<std::string, std::map<std::string, double>> ordinal_maps;
  bool standardize = true;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  std::uint64_t seed = 1;

  void validate() const;
  static PreprocessRecipe from_json_file(const std::string& path);
};

// Encoder fitted on the training split; re-encodes new rows with the same
// levels and statistics. Unknown categorical levels map to all-zero
// indicators and bump a warning counter.
struct TabularEncoder {
  struct NumericColumn {
    std::string name;
    double mean = 0.0;
    double sd = 1.0;
  };
  struct OrdinalColumn {
    std::string name;
    std::map<std::string, double> mapping;
    double mean = 0.0;
    double sd = 1.0;
  };
  struct CategoricalColumn {
    std::string name;
    std::vector<std::string> levels;  // sorted; first level is the reference
  };

  std::vector<NumericColumn> numeric;
  std::vector<OrdinalColumn> ordinal;
  std::vector<CategoricalColumn> categorical;
  std::vector<std::string> feature_names;

  Eigen::MatrixXd encode(const RawTable& table,
                         const std::vector<int>& row_ids,
                         int* unknown_level_events = nullptr) const;
};

struct EncodedSplits {
  Dataset train, val, test;
  TabularEncoder encoder;
  std::vector<std::vector<int>> split_rows;  // raw row ids per split
};

EncodedSplits preprocess_tabular(const RawTable& raw,
                                 const PreprocessRecipe& recipe);

}  // namespace drn
