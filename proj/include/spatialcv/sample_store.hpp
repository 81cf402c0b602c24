#pragma once

// Tabular training data: one row per sample with its group, location,
// predictor values and response.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "spatialcv/error.hpp"
#include "spatialcv/raster.hpp"
#include "spatialcv/text.hpp"

namespace spatialcv {

enum class Task { classification, regression };

inline std::string_view to_string(Task t) { return t == Task::classification ? "classification" : "regression"; }

inline Task parse_task(std::string_view s) {
    if (s == "classification") return Task::classification;
    if (s == "regression") return Task::regression;
    throw ConfigError("unknown task '" + std::string(s) + "' (expected classification or regression)");
}

/// Polygon or cluster a sample was drawn from; never split across spatial folds.
struct GroupId {
    std::int64_t value = 0;
    auto operator<=>(const GroupId&) const = default;
};

struct SampleRow {
    std::int64_t id = 0;
    GroupId group;
    double x = 0.0;
    double y = 0.0;
    std::vector<double> features;
    double response = 0.0;  // class index for classification
};

/// A sample location before predictor extraction.
struct SamplePoint {
    std::int64_t id = 0;
    GroupId group;
    double x = 0.0;
    double y = 0.0;
    double response = 0.0;
};

/// Validated, immutable sample table. For classification tasks the response
/// holds an index into class_labels(), which is sorted.
class SampleTable {
public:
    SampleTable() = default;

    SampleTable(Task task, std::vector<std::string> feature_names, std::vector<SampleRow> rows,
                std::vector<std::string> class_labels = {})
        : task_(task),
          feature_names_(std::move(feature_names)),
          rows_(std::move(rows)),
          class_labels_(std::move(class_labels)) {
        validate();
    }

    Task task() const { return task_; }
    const std::vector<std::string>& feature_names() const { return feature_names_; }
    const std::vector<SampleRow>& rows() const { return rows_; }
    const SampleRow& row(std::size_t i) const { return rows_[i]; }
    const std::vector<std::string>& class_labels() const { return class_labels_; }
    std::size_t size() const { return rows_.size(); }
    bool empty() const { return rows_.empty(); }
    std::size_t n_features() const { return feature_names_.size(); }
    std::size_t n_classes() const { return class_labels_.size(); }

    std::optional<std::size_t> feature_index(std::string_view name) const {
        for (std::size_t j = 0; j < feature_names_.size(); ++j)
            if (feature_names_[j] == name) return j;
        return std::nullopt;
    }

    std::vector<double> responses() const {
        std::vector<double> out;
        out.reserve(rows_.size());
        for (const auto& r : rows_) out.push_back(r.response);
        return out;
    }

    /// Table restricted to the named features, in the given order.
    SampleTable select_features(const std::vector<std::string>& names) const {
        std::vector<std::size_t> idx;
        for (const auto& n : names) {
            const auto j = feature_index(n);
            if (!j) throw FeatureMismatchError("table has no feature named '" + n + "'");
            idx.push_back(*j);
        }
        std::vector<SampleRow> rows = rows_;
        for (auto& r : rows) {
            std::vector<double> f;
            f.reserve(idx.size());
            for (std::size_t j : idx) f.push_back(r.features[j]);
            r.features = std::move(f);
        }
        return SampleTable(task_, names, std::move(rows), class_labels_);
    }

    /// Rows at the given positions, in that order.
    SampleTable subset(std::span<const std::size_t> positions) const {
        std::vector<SampleRow> rows;
        rows.reserve(positions.size());
        for (std::size_t i : positions) rows.push_back(rows_.at(i));
        return SampleTable(task_, feature_names_, std::move(rows), class_labels_);
    }

private:
    void validate() const {
        std::unordered_set<std::string> names;
        for (const auto& n : feature_names_) {
            if (n.empty()) throw ValidationError("feature names must be non-empty");
            if (!names.insert(n).second) throw ValidationError("duplicate feature name '" + n + "'");
        }
        if (task_ == Task::regression && !class_labels_.empty())
            throw ValidationError("regression tables carry no class labels");
        if (!std::is_sorted(class_labels_.begin(), class_labels_.end()) ||
            std::adjacent_find(class_labels_.begin(), class_labels_.end()) != class_labels_.end())
            throw ValidationError("class labels must be sorted and unique");

        std::unordered_set<std::int64_t> ids;
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            const auto& r = rows_[i];
            if (!ids.insert(r.id).second) throw ValidationError("duplicate sample id " + std::to_string(r.id));
            if (r.group.value < 0) throw ValidationError("negative group id for sample " + std::to_string(r.id));
            if (!std::isfinite(r.x) || !std::isfinite(r.y))
                throw ValidationError("non-finite coordinates for sample " + std::to_string(r.id));
            if (r.features.size() != feature_names_.size())
                throw ValidationError("sample " + std::to_string(r.id) + " has " + std::to_string(r.features.size()) +
                                      " features, expected " + std::to_string(feature_names_.size()));
            for (double v : r.features)
                if (!std::isfinite(v))
                    throw ValidationError("missing or non-finite feature value for sample " + std::to_string(r.id));
            if (!std::isfinite(r.response))
                throw ValidationError("non-finite response for sample " + std::to_string(r.id));
            if (task_ == Task::classification) {
                const double k = r.response;
                if (k < 0 || k != std::floor(k) || k >= static_cast<double>(class_labels_.size()))
                    throw ValidationError("sample " + std::to_string(r.id) + " has a response outside the label set");
            }
        }
    }

    Task task_ = Task::regression;
    std::vector<std::string> feature_names_;
    std::vector<SampleRow> rows_;
    std::vector<std::string> class_labels_;
};

/// Column-major feature matrix used by the learners.
struct FeatureMatrix {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<double> values;

    double operator()(std::size_t row, std::size_t col) const { return values[col * n_rows + row]; }
    std::span<const double> column(std::size_t col) const {
        return {values.data() + col * n_rows, n_rows};
    }

    static FeatureMatrix from(const SampleTable& table) {
        FeatureMatrix m{table.size(), table.n_features(), {}};
        m.values.resize(m.n_rows * m.n_cols);
        for (std::size_t i = 0; i < m.n_rows; ++i)
            for (std::size_t j = 0; j < m.n_cols; ++j) m.values[j * m.n_rows + i] = table.row(i).features[j];
        return m;
    }
};

// ---------------------------------------------------------------------------
// CSV

struct CsvSchema {
    std::string id = "id";
    std::string group = "group";
    std::string x = "x";
    std::string y = "y";
    std::string response = "response";
};

/// Parses sample CSV text. Columns other than the five schema columns are
/// features, in file order.
inline SampleTable parse_samples_csv(std::string_view text, const CsvSchema& schema, Task task) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::size_t> line_numbers;
    {
        std::size_t line_no = 0, start = 0;
        while (start < text.size()) {
            std::size_t end = text.find('\n', start);
            if (end == std::string_view::npos) end = text.size();
            ++line_no;
            const auto line = text.substr(start, end - start);
            start = end + 1;
            if (trim(line).empty()) continue;
            records.push_back(split_csv_record(line));
            line_numbers.push_back(line_no);
        }
    }
    if (records.empty()) throw SchemaError("sample CSV is empty (no header row)");

    auto header = records.front();
    if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) header[0].erase(0, 3);
    for (auto& h : header) h = std::string(trim(h));
    auto column = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw SchemaError("missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t c_id = column(schema.id), c_group = column(schema.group), c_x = column(schema.x),
                      c_y = column(schema.y), c_resp = column(schema.response);
    std::vector<std::size_t> feature_cols;
    std::vector<std::string> feature_names;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == c_id || c == c_group || c == c_x || c == c_y || c == c_resp) continue;
        feature_cols.push_back(c);
        feature_names.push_back(header[c]);
    }

    std::vector<SampleRow> rows;
    std::vector<std::string> raw_labels;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        const std::string where = "row " + std::to_string(line_numbers[r]);
        if (rec.size() != header.size())
            throw ParseError(where + ": expected " + std::to_string(header.size()) + " cells, found " +
                             std::to_string(rec.size()));
        auto number = [&](std::size_t c) {
            const auto v = parse_double(rec[c]);
            if (!v || !std::isfinite(*v))
                throw ParseError(where + ": non-numeric or missing value '" + rec[c] + "' in column '" + header[c] + "'");
            return *v;
        };
        SampleRow row;
        const auto id = parse_integer(rec[c_id]);
        if (!id) throw ParseError(where + ": id '" + rec[c_id] + "' is not an integer");
        const auto group = parse_integer(rec[c_group]);
        if (!group || *group < 0) throw ParseError(where + ": group '" + rec[c_group] + "' is not a non-negative integer");
        row.id = *id;
        row.group = GroupId{*group};
        row.x = number(c_x);
        row.y = number(c_y);
        for (std::size_t c : feature_cols) row.features.push_back(number(c));
        if (task == Task::regression) {
            row.response = number(c_resp);
        } else {
            const auto label = std::string(trim(rec[c_resp]));
            if (label.empty()) throw ParseError(where + ": missing class label");
            raw_labels.push_back(label);
        }
        rows.push_back(std::move(row));
    }

    std::vector<std::string> labels;
    if (task == Task::classification) {
        const std::set<std::string> unique(raw_labels.begin(), raw_labels.end());
        labels.assign(unique.begin(), unique.end());
        for (std::size_t i = 0; i < rows.size(); ++i)
            rows[i].response = static_cast<double>(
                std::lower_bound(labels.begin(), labels.end(), raw_labels[i]) - labels.begin());
    }
    return SampleTable(task, std::move(feature_names), std::move(rows), std::move(labels));
}

inline SampleTable read_samples_csv(const std::filesystem::path& path, const CsvSchema& schema = {},
                                    Task task = Task::regression) {
    return parse_samples_csv(read_text_file(path), schema, task);
}

inline std::string format_samples_csv(const SampleTable& table, const CsvSchema& schema = {}) {
    std::string out = csv_escape(schema.id) + ',' + csv_escape(schema.group) + ',' + csv_escape(schema.x) + ',' +
                      csv_escape(schema.y) + ',' + csv_escape(schema.response);
    for (const auto& f : table.feature_names()) out += ',' + csv_escape(f);
    out += '\n';
    for (const auto& r : table.rows()) {
        out += std::to_string(r.id) + ',' + std::to_string(r.group.value) + ',' + format_double(r.x) + ',' +
               format_double(r.y) + ',';
        if (table.task() == Task::classification)
            out += csv_escape(table.class_labels()[static_cast<std::size_t>(r.response)]);
        else
            out += format_double(r.response);
        for (double v : r.features) out += ',' + format_double(v);
        out += '\n';
    }
    return out;
}

inline void write_samples_csv(const SampleTable& table, const std::filesystem::path& path,
                              const CsvSchema& schema = {}) {
    write_text_file(path, format_samples_csv(table, schema));
}

// ---------------------------------------------------------------------------
// Extraction

/// Reads every band at the cell owning each point. Feature names are the
/// band names; rows keep the order of `points`.
inline SampleTable extract_at_samples(const RasterStack& stack, const std::vector<SamplePoint>& points,
                                      Task task = Task::regression, std::vector<std::string> class_labels = {}) {
    if (stack.empty()) throw ArgumentError("cannot extract from an empty stack");
    const auto& bands = stack.bands();
    const auto& reference = bands.front().grid;
    std::vector<SampleRow> rows;
    rows.reserve(points.size());
    for (const auto& p : points) {
        const auto cell = reference.locate(p.x, p.y);
        if (!cell)
            throw OutOfBoundsError("sample " + std::to_string(p.id) + " at (" + format_double(p.x) + ", " +
                                   format_double(p.y) + ") lies outside the raster extent");
        SampleRow row{p.id, p.group, p.x, p.y, {}, p.response};
        row.features.reserve(bands.size());
        for (const auto& b : bands) {
            const double v = b.grid(cell->row, cell->col);
            if (b.grid.is_nodata(v))
                throw ExtractionError("sample " + std::to_string(p.id) + " falls on a NODATA cell of band '" +
                                      b.name + "'");
            row.features.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    return SampleTable(task, stack.names(), std::move(rows), std::move(class_labels));
}

/// Appends "coord_x" and "coord_y" features equal to each row's map coordinates.
inline SampleTable add_geolocation_features(const SampleTable& table) {
    for (const char* name : {"coord_x", "coord_y"})
        if (table.feature_index(name)) throw ValidationError(std::string("feature '") + name + "' already exists");
    auto names = table.feature_names();
    names.push_back("coord_x");
    names.push_back("coord_y");
    std::vector<SampleRow> rows = table.rows();
    for (auto& r : rows) {
        r.features.push_back(r.x);
        r.features.push_back(r.y);
    }
    return SampleTable(table.task(), std::move(names), std::move(rows), table.class_labels());
}

}  // namespace spatialcv
