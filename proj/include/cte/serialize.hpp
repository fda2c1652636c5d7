#pragma once

#include "cte/bench.hpp"
#include "cte/compress.hpp"
#include "cte/data.hpp"
#include "cte/metrics.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cte {

using Json = nlohmann::json;

/// Without timing the document is a pure function of the inputs and seed.
Json to_json(const CoresetSelection &sel, bool with_timing = true);
CoresetSelection coreset_from_json(const Json &j);

Json to_json(const DiscrepancyReport &r);
Json to_json(const ErrorReport &r);

Json to_json(const PreprocessSpec &spec);
PreprocessSpec preprocess_from_json(const Json &j);

Json to_json(const Explanation &e);
Explanation explanation_from_json(const Json &j);

/// Reproducible part of a trial record (no timings).
Json to_json(const TrialRecord &r);
Json timing_json(const TrialRecord &r);
TrialRecord record_from_json(const Json &record, const Json *timing = nullptr);

Json aggregate_json(const BenchResult &result, const GroundTruth &truth);
Json to_json(const SummaryTable &table);
SummaryTable summary_from_json(const Json &j);

/// Flat CSV for plotting: instance,feature,value for attributions;
/// feature,value,stderr for importance; feature_a,feature_b,grid_a,grid_b,value for effects.
std::string explanation_csv(const Explanation &e);

/// Throws FormatError with the JSON path of the first violation. Supports the
/// subset of JSON Schema used under docs/schemas.
void validate_with_schema(const Json &doc, const Json &schema);

/// Schema by file stem, e.g. "trial_record"; compiled in from docs/schemas.
const Json &schema(const std::string &name);
void validate_json(const Json &doc, const std::string &schema_name);

Json read_json_file(const std::filesystem::path &path);
/// Writes @p j with 2-space indentation and a trailing newline.
void write_json_file(const std::filesystem::path &path, const Json &j);
void write_text_file(const std::filesystem::path &path, const std::string &text);
std::string read_text_file(const std::filesystem::path &path);

}  // namespace cte
