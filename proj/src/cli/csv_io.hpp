#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wknn/core.hpp"
#include "wknn/experiments.hpp"

namespace wknn::cli {

/// Sample file: header x1,...,xd[,y1,...,ye], one point per row.
struct SampleFile {
    Sample inputs;
    std::optional<Sample> outputs;
};

SampleFile read_sample_csv(std::istream& in);
SampleFile read_sample_csv(const std::filesystem::path& path);
void write_sample_csv(std::ostream& out, const Sample& inputs, const std::optional<Sample>& outputs = std::nullopt);

/// %.17g, so every double round-trips through text.
std::string format_number(double value);

void write_runs_csv(std::ostream& out, const std::vector<RunRecord>& runs);
void write_summary_csv(std::ostream& out, const std::string& abscissa_name, const std::vector<SummaryRow>& rows);
void write_ratefit_csv(std::ostream& out, const RateFit& fit);

}  // namespace wknn::cli
