#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "compresid/dataset.hpp"
#include "compresid/envelope.hpp"
#include "compresid/regression.hpp"

namespace compresid {

/// Writes through a sibling temporary file and renames it into place, so a
/// failed write never leaves a partial file behind.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Schema line written as the first line of every CSV this library emits,
/// e.g. "# compresid-residuals v1".
std::string schema_line(std::string_view schema, int version = 1);

/// Checks a schema comment line. Returns false if `line` is not a schema
/// comment at all; throws DataError for a known prefix with an unexpected
/// schema name or version.
bool check_schema_line(std::string_view line, std::string_view expected_schema,
                       int expected_version = 1);

/// Plain numeric table with a header row. Leading '#' lines are comments; a
/// compresid schema comment, if present, must match `expected_schema`.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};
CsvTable parse_csv(std::string_view text, std::string_view expected_schema = "data");
CsvTable read_csv(const std::filesystem::path& path, std::string_view expected_schema = "data");

/// Splits the table into named response columns and covariates (every other
/// column). Rows are validated with the observed-data tolerance and
/// renormalized unless `raw` is set (raw keeps zeros for preprocess_zeros).
Dataset dataset_from_table(const CsvTable& table, const std::vector<std::string>& components,
                           bool raw = false);
Dataset read_dataset(const std::filesystem::path& path,
                     const std::vector<std::string>& components, bool raw = false);

std::string dataset_csv(const Dataset& data);

/// Serialized model: spec, coefficients, fit metadata.
struct ModelArtifact {
  std::vector<std::string> component_names;
  FittedModel fit;
  std::uint64_t seed = 0;
  std::string data_source;
};

std::string artifact_json(const ModelArtifact& artifact);
ModelArtifact parse_artifact_json(std::string_view text);
ModelArtifact read_artifact(const std::filesystem::path& path);

/// Rebuilds fitted values for `data` from the stored coefficients.
FittedModel restore_fit(const ModelArtifact& artifact, const Dataset& data);

std::string envelope_csv(const EnvelopeResult& env,
                         const std::vector<std::pair<std::string, std::string>>& metadata = {});

/// Shortest round-trip decimal text for a double.
std::string format_double(double value);

}  // namespace compresid
