#pragma once

#include "poisonlab/common.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>

namespace poisonlab {

using RawDataset = Dataset;

struct SplitRatios {
  Scalar train = 0.50;
  Scalar val = 0.15;
  Scalar test = 0.35;
};

struct SplitBundle {
  Dataset train;
  Dataset val;
  Dataset test;
  IndexList train_rows, val_rows, test_rows; // rows of the raw dataset
  std::uint64_t seed = 0;
};

/// Per-column affine transform. Column m (the last entry) is the label.
struct Scaler {
  Vector mean;
  Vector std;

  Dataset apply(const Dataset& d) const;
  Dataset invert(const Dataset& d) const;
};

/// Reads a numeric CSV. The target column defaults to the last one; any other
/// column index may be chosen with `target_col`.
RawDataset load_csv(const std::filesystem::path& path, bool has_header,
                    std::optional<Index> target_col = std::nullopt);

/// Resolves a column given as an index or a header name.
Index resolve_column(const std::filesystem::path& path, const std::string& column);

/// Writes features then label; an extra 0/1 column is appended when
/// `is_poison` is non-empty.
void save_csv(const std::filesystem::path& path, const Dataset& d,
              const std::vector<bool>& is_poison = {});

SplitBundle split(const RawDataset& raw, const SplitRatios& ratios, std::uint64_t seed);

/// Partition sizes used by `split`: train and val are rounded, test gets the rest.
std::array<Index, 3> split_sizes(Index n, const SplitRatios& ratios);

SplitRatios parse_ratios(const std::string& text);

/// Fits the scaler on the training partition only.
Scaler fit_scaler(const Dataset& train);

std::pair<SplitBundle, Scaler> standardize(const SplitBundle& bundle);

/// x ~ U(-5, 5), y = 0.8 x + N(0, 1.2^2).
Dataset gen_synthetic(Index n, std::uint64_t seed);

} // namespace poisonlab
