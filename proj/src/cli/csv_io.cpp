#include "cli/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace wknn::cli {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

// "x3" -> 3, anything else -> 0
std::size_t column_number(const std::string& name, char prefix) {
    if (name.size() < 2 || name[0] != prefix) return 0;
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), value);
    if (ec != std::errc() || ptr != name.data() + name.size()) return 0;
    return value;
}

}  // namespace

std::string format_number(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

SampleFile read_sample_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) throw InvalidInput("sample CSV is empty (missing header)");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = split_fields(trim(line));

    std::size_t d = 0;
    std::size_t e = 0;
    for (const auto& raw : header) {
        const std::string name = trim(raw);
        if (const std::size_t xi = column_number(name, 'x'); xi != 0 && e == 0) {
            if (xi != d + 1) throw InvalidInput("sample CSV header: expected x" + std::to_string(d + 1) + ", got " + name);
            ++d;
        } else if (const std::size_t yi = column_number(name, 'y'); yi != 0 && d > 0) {
            if (yi != e + 1) throw InvalidInput("sample CSV header: expected y" + std::to_string(e + 1) + ", got " + name);
            ++e;
        } else {
            throw InvalidInput("sample CSV header: unexpected column '" + name + "'");
        }
    }
    if (d == 0) throw InvalidInput("sample CSV header has no x columns");

    std::vector<double> xs;
    std::vector<double> ys;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto fields = split_fields(trim(line));
        if (fields.size() != d + e) {
            throw InvalidInput("sample CSV row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                               " fields, expected " + std::to_string(d + e));
        }
        for (std::size_t c = 0; c < fields.size(); ++c) {
            const std::string f = trim(fields[c]);
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (f.empty() || ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v)) {
                throw InvalidInput("sample CSV row " + std::to_string(row) + ": '" + f + "' is not a finite number");
            }
            (c < d ? xs : ys).push_back(v);
        }
    }
    if (xs.empty()) throw InvalidInput("sample CSV has no data rows");

    SampleFile file{Sample(d, std::move(xs)), std::nullopt};
    if (e > 0) file.outputs = Sample(e, std::move(ys));
    return file;
}

SampleFile read_sample_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open sample file " + path.string());
    return read_sample_csv(in);
}

void write_sample_csv(std::ostream& out, const Sample& inputs, const std::optional<Sample>& outputs) {
    if (outputs && outputs->size() != inputs.size()) throw InvalidInput("inputs and outputs differ in length");
    for (std::size_t c = 0; c < inputs.dim(); ++c) out << (c ? "," : "") << 'x' << c + 1;
    if (outputs) {
        for (std::size_t c = 0; c < outputs->dim(); ++c) out << ",y" << c + 1;
    }
    out << '\n';
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto p = inputs.point(i);
        for (std::size_t c = 0; c < p.size(); ++c) out << (c ? "," : "") << format_number(p[c]);
        if (outputs) {
            for (double y : outputs->point(i)) out << ',' << format_number(y);
        }
        out << '\n';
    }
}

void write_runs_csv(std::ostream& out, const std::vector<RunRecord>& runs) {
    out << "scenario,m,n,k,q,s_corr,rep,seed,statistic,seconds,method\n";
    for (const auto& r : runs) {
        out << r.scenario << ',' << r.m << ',' << r.n << ',' << r.k << ',' << format_number(r.q) << ','
            << format_number(r.s_corr) << ',' << r.rep << ',' << r.seed << ',' << format_number(r.statistic) << ','
            << format_number(r.seconds) << ',' << r.method << '\n';
    }
}

void write_summary_csv(std::ostream& out, const std::string& abscissa_name, const std::vector<SummaryRow>& rows) {
    out << abscissa_name << ",mean,stderr,count\n";
    for (const auto& row : rows) {
        out << format_number(row.abscissa) << ',' << format_number(row.estimate.mean) << ','
            << format_number(row.estimate.std_error) << ',' << row.estimate.count << '\n';
    }
}

void write_ratefit_csv(std::ostream& out, const RateFit& fit) {
    out << "slope,intercept,rms\n";
    out << format_number(fit.slope) << ',' << format_number(fit.intercept) << ',' << format_number(fit.rms) << '\n';
}

}  // namespace wknn::cli
