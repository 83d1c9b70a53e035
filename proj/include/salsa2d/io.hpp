#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "salsa2d/common.hpp"
#include "salsa2d/geometry.hpp"

namespace salsa2d::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Plain files

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw InputError("failed writing '" + path.string() + "'");
}

/// 64-bit FNV-1a of a byte string, as a 16-digit hex string.
inline std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Shortest text that reads back to the same double; "nan"/"inf"/"-inf" otherwise.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& context) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s == "inf" || s == "Inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf" || s == "-Inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan" || s == "NaN" || s == "NA") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const char* first = s.data();
    if (!s.empty() && s.front() == '+') ++first;
    auto res = std::from_chars(first, s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw InputError("not a number: '" + std::string(s) + "' (" + context + ")");
    return v;
}

// ---------------------------------------------------------------------------
// CSV: mandatory header row, comma separated, optional double quotes.

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        return header.size();
    }
    bool has(const std::string& name) const { return column(name) < header.size(); }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    out.push_back(std::move(field));
    return out;
}

inline CsvTable parse_csv(const std::string& text, const std::string& source = "csv") {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (first && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (first) {
            for (auto& f : fields) {
                while (!f.empty() && f.back() == ' ') f.pop_back();
                while (!f.empty() && f.front() == ' ') f.erase(0, 1);
            }
            t.header = std::move(fields);
            first = false;
            continue;
        }
        if (fields.size() != t.header.size())
            throw InputError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                             " fields, found " + std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
    }
    if (first) throw InputError(source + ": missing header row");
    return t;
}

inline CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_file(path), path.string()); }

inline std::vector<double> numeric_column(const CsvTable& t, const std::string& name, const std::string& source) {
    const auto c = t.column(name);
    if (c >= t.header.size()) throw InputError(source + ": missing column '" + name + "'");
    std::vector<double> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        out.push_back(parse_double(t.rows[r][c], source + " row " + std::to_string(r + 2) + " column " + name));
    return out;
}

/// Builds CSV text from a header and rows of preformatted fields.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : ncol_(header.size()) { row(header); }

    void row(const std::vector<std::string>& fields) {
        if (fields.size() != ncol_) throw InputError("CsvWriter: row has the wrong number of fields");
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ += ',';
            if (fields[i].find_first_of(",\"\n") != std::string::npos) {
                out_ += '"';
                for (char c : fields[i]) out_ += c == '"' ? std::string("\"\"") : std::string(1, c);
                out_ += '"';
            } else {
                out_ += fields[i];
            }
        }
        out_ += '\n';
    }
    const std::string& str() const { return out_; }

private:
    std::size_t ncol_;
    std::string out_;
};

/// Points from a CSV with `x,y` columns (km); an optional `multiplicity`
/// column gives repeated records at one location.
inline PointSet points_from_csv(const CsvTable& t, const std::string& source) {
    auto xs = numeric_column(t, "x", source);
    auto ys = numeric_column(t, "y", source);
    PointSet ps;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!std::isfinite(xs[i]) || !std::isfinite(ys[i]))
            throw InputError(source + ": non-finite coordinate in row " + std::to_string(i + 2));
        ps.points.push_back({xs[i], ys[i]});
    }
    if (t.has("multiplicity")) ps.multiplicity = numeric_column(t, "multiplicity", source);
    return ps;
}

inline PointSet read_points_csv(const std::filesystem::path& path) { return points_from_csv(read_csv(path), path.string()); }

inline std::string points_csv(const PointSet& ps) {
    CsvWriter w({"x", "y"});
    for (const auto& p : ps.points) w.row({format_double(p.x), format_double(p.y)});
    return w.str();
}

// ---------------------------------------------------------------------------
// GeoJSON

namespace detail {

inline Point json_point(const json& c) {
    if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number())
        throw InputError("GeoJSON: malformed coordinate");
    return {c[0].get<double>(), c[1].get<double>()};
}

inline std::vector<Point> json_line(const json& c) {
    if (!c.is_array()) throw InputError("GeoJSON: malformed coordinate list");
    std::vector<Point> out;
    for (const auto& p : c) out.push_back(json_point(p));
    return out;
}

template <typename Fn>
void for_each_geometry(const json& j, Fn&& fn) {
    if (!j.is_object() || !j.contains("type")) throw InputError("GeoJSON: object without a type");
    const std::string type = j.at("type").get<std::string>();
    if (type == "FeatureCollection") {
        for (const auto& f : j.at("features")) for_each_geometry(f, fn);
    } else if (type == "Feature") {
        if (!j.at("geometry").is_null()) for_each_geometry(j.at("geometry"), fn);
    } else if (type == "GeometryCollection") {
        for (const auto& g : j.at("geometries")) for_each_geometry(g, fn);
    } else {
        fn(type, j.at("coordinates"));
    }
}

}  // namespace detail

/// All polygon rings in a GeoJSON document (Polygon and MultiPolygon,
/// possibly inside features). Parts are combined under the even-odd rule.
inline Polygon polygon_from_geojson(const std::string& text, const std::string& source = "geojson") {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(source + ": invalid JSON: " + e.what());
    }
    Polygon poly;
    try {
        detail::for_each_geometry(j, [&](const std::string& type, const json& c) {
            if (type == "Polygon") {
                for (const auto& ring : c) poly.rings.push_back(detail::json_line(ring));
            } else if (type == "MultiPolygon") {
                for (const auto& part : c)
                    for (const auto& ring : part) poly.rings.push_back(detail::json_line(ring));
            } else {
                throw InputError("expected Polygon or MultiPolygon geometry, found " + type);
            }
        });
    } catch (const json::exception& e) {
        throw InputError(source + ": malformed GeoJSON: " + e.what());
    } catch (const InputError& e) {
        throw InputError(source + ": " + e.what());
    }
    if (poly.rings.empty()) throw InputError(source + ": no polygon found");
    return normalize_polygon(std::move(poly));
}

inline Polygon read_polygon_geojson(const std::filesystem::path& path) {
    return polygon_from_geojson(read_file(path), path.string());
}

/// Point and line features (polygon outlines are treated as closed lines).
inline FeatureSet features_from_geojson(const std::string& text, const std::string& source = "geojson") {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(source + ": invalid JSON: " + e.what());
    }
    FeatureSet fs;
    try {
        detail::for_each_geometry(j, [&](const std::string& type, const json& c) {
            if (type == "Point") {
                fs.points.push_back(detail::json_point(c));
            } else if (type == "MultiPoint") {
                for (const auto& p : c) fs.points.push_back(detail::json_point(p));
            } else if (type == "LineString") {
                fs.polylines.push_back(detail::json_line(c));
            } else if (type == "MultiLineString") {
                for (const auto& l : c) fs.polylines.push_back(detail::json_line(l));
            } else if (type == "Polygon") {
                for (const auto& r : c) fs.polylines.push_back(detail::json_line(r));
            } else if (type == "MultiPolygon") {
                for (const auto& part : c)
                    for (const auto& r : part) fs.polylines.push_back(detail::json_line(r));
            } else {
                throw InputError("unsupported geometry type " + type);
            }
        });
    } catch (const json::exception& e) {
        throw InputError(source + ": malformed GeoJSON: " + e.what());
    } catch (const InputError& e) {
        throw InputError(source + ": " + e.what());
    }
    if (fs.points.empty() && fs.polylines.empty()) throw InputError(source + ": no features found");
    return fs;
}

inline FeatureSet read_features_geojson(const std::filesystem::path& path) {
    return features_from_geojson(read_file(path), path.string());
}

inline std::string polygon_to_geojson(const Polygon& poly) {
    json rings = json::array();
    for (const auto& r : poly.rings) {
        json ring = json::array();
        for (const auto& p : r) ring.push_back({p.x, p.y});
        if (!r.empty()) ring.push_back({r.front().x, r.front().y});
        rings.push_back(ring);
    }
    return json{{"type", "Polygon"}, {"coordinates", rings}}.dump();
}

// ---------------------------------------------------------------------------
// Distance matrices

inline constexpr char kDistanceMagic[8] = {'S', 'A', 'L', 'S', 'A', 'D', 'M', '1'};

/// Binary layout (little endian): 8-byte magic, u64 rows, u64 cols,
/// u32 metric tag (0 euclidean, 1 geodesic), u32 reserved, then rows x cols
/// float64 values in row-major order.
inline std::string distance_matrix_binary(const DistanceMatrix& d) {
    std::string out(kDistanceMagic, kDistanceMagic + 8);
    auto put = [&](const auto& v) { out.append(reinterpret_cast<const char*>(&v), sizeof v); };
    put(static_cast<std::uint64_t>(d.rows()));
    put(static_cast<std::uint64_t>(d.cols()));
    put(static_cast<std::uint32_t>(d.metric == Metric::Euclidean ? 0 : 1));
    put(static_cast<std::uint32_t>(0));
    for (Eigen::Index i = 0; i < d.rows(); ++i)
        for (Eigen::Index j = 0; j < d.cols(); ++j) put(d.values(i, j));
    return out;
}

inline DistanceMatrix distance_matrix_from_binary(const std::string& bytes) {
    constexpr std::size_t header = 8 + 8 + 8 + 4 + 4;
    if (bytes.size() < header || std::memcmp(bytes.data(), kDistanceMagic, 8) != 0)
        throw InputError("not a distance matrix file");
    std::uint64_t rows, cols;
    std::uint32_t tag;
    std::memcpy(&rows, bytes.data() + 8, 8);
    std::memcpy(&cols, bytes.data() + 16, 8);
    std::memcpy(&tag, bytes.data() + 24, 4);
    if (tag > 1) throw InputError("distance matrix file has an unknown metric tag");
    if (rows != 0 && cols > (bytes.size() - header) / 8 / rows) throw InputError("distance matrix file is truncated");
    if (bytes.size() != header + rows * cols * 8) throw InputError("distance matrix file has the wrong size");
    DistanceMatrix d;
    d.metric = tag == 0 ? Metric::Euclidean : Metric::Geodesic;
    d.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const char* p = bytes.data() + header;
    for (Eigen::Index i = 0; i < d.rows(); ++i)
        for (Eigen::Index j = 0; j < d.cols(); ++j, p += 8) std::memcpy(&d.values(i, j), p, 8);
    return d;
}

inline std::string distance_matrix_csv(const DistanceMatrix& d) {
    std::vector<std::string> header;
    for (Eigen::Index j = 0; j < d.cols(); ++j) header.push_back("c" + std::to_string(j));
    CsvWriter w(header);
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        std::vector<std::string> row;
        for (Eigen::Index j = 0; j < d.cols(); ++j) row.push_back(format_double(d.values(i, j)));
        w.row(row);
    }
    return w.str();
}

}  // namespace salsa2d::io
