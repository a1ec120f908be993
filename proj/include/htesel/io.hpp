#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include "htesel/data.hpp"

namespace htesel {

class ScoreTensor;

// Dataset CSV: header `x_0,...,x_{d-1},t,y`, one unit per row.
// Predictions CSV: header `tau_0,...,tau_{p-1}`, one unit per row.

Dataset read_dataset_csv(std::istream& in);
Dataset read_dataset_csv(const std::filesystem::path& path);

/// `expected_n`, when given, must equal the number of data rows.
CandidateSet read_predictions_csv(std::istream& in, std::optional<std::size_t> expected_n = {});
CandidateSet read_predictions_csv(const std::filesystem::path& path,
                                  std::optional<std::size_t> expected_n = {});

void write_dataset_csv(std::ostream& out, const Dataset& data);
void write_predictions_csv(std::ostream& out, const CandidateSet& candidates);

/// Debug dump, one `r,s,i,score` row per entry with r != s.
void write_tensor_csv(std::ostream& out, const ScoreTensor& tensor);

}  // namespace htesel
