#pragma once

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

#include "photonstat/correlator.hpp"
#include "photonstat/errors.hpp"
#include "photonstat/montecarlo.hpp"
#include "photonstat/units.hpp"

namespace photonstat {

// Worker cap for parallel sections: PHOTONSTAT_THREADS when set, otherwise
// the hardware concurrency.
inline unsigned thread_budget() {
    if (const char* env = std::getenv("PHOTONSTAT_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw >= 1 ? hw : 1;
}

namespace detail {

// Shortest decimal form that parses back to the identical double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& what) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw data_error("cannot parse " + what + " from '" + std::string(s) + "'");
    return v;
}

template <typename Int>
inline Int parse_int(std::string_view s, const std::string& what) {
    Int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw data_error("cannot parse " + what + " from '" + std::string(s) + "'");
    return v;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace detail

// Write via a temp file in the same directory plus rename, so readers never
// observe a half-written file.
inline void atomic_write(const std::filesystem::path& path, const std::string& contents) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw data_error("cannot open '" + tmp.string() + "' for writing");
        out << contents;
        if (!out) throw data_error("failed writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw data_error("cannot move '" + tmp.string() + "' to '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Timestamp stream file: '#'-prefixed key=value metadata header, then one
// record per line, "channel,timestamp_ps", integer picoseconds, ascending.
// ---------------------------------------------------------------------------

inline std::string serialize_stream(const PhotonStream& stream) {
    using detail::format_double;
    const StreamMetadata& m = stream.meta;
    std::ostringstream out;
    out << "# photonstat-stream v1\n";
    out << "# duration_s=" << format_double(m.duration) << "\n";
    out << "# emitter_seed=" << m.emitter.seed << "\n";
    out << "# detector_seed=" << m.detector_seed << "\n";
    out << "# rng=" << m.rng << "\n";
    out << "# k_hz=" << format_double(m.emitter.rates.k) << "\n";
    out << "# inv_t1_hz=" << format_double(m.emitter.rates.inv_T1) << "\n";
    out << "# gamma12_hz=" << format_double(m.emitter.rates.gamma12) << "\n";
    out << "# gamma20_hz=" << format_double(m.emitter.rates.gamma20) << "\n";
    out << "# phi_f=" << format_double(m.emitter.phi_F) << "\n";
    out << "# burn_in_s=" << format_double(m.emitter.burn_in) << "\n";
    out << "# efficiency=" << format_double(m.detector.efficiency) << "\n";
    out << "# background_cps=" << format_double(m.detector.background_rate) << "\n";
    out << "# dead_time_s=" << format_double(m.detector.dead_time) << "\n";
    out << "# jitter_s=" << format_double(m.detector.jitter_sigma) << "\n";
    out << "# electronic_delay_s=" << format_double(m.detector.electronic_delay) << "\n";
    for (const auto& [key, value] : m.extra) out << "# " << key << "=" << value << "\n";
    out << "# n_records=" << stream.records.size() << "\n";
    for (const auto& r : stream.records)
        out << channel_letter(r.channel) << "," << r.t_ps << "\n";
    return out.str();
}

inline PhotonStream parse_stream(std::istream& in) {
    PhotonStream stream;
    StreamMetadata& m = stream.meta;
    m.rng.clear();
    std::size_t expected_records = 0;
    bool header_done = false;
    std::string line;
    std::int64_t last_ts = std::numeric_limits<std::int64_t>::min();

    while (std::getline(in, line)) {
        std::string_view view = detail::trim(line);
        if (view.empty()) continue;
        if (view.front() == '#') {
            if (header_done)
                throw data_error("metadata line after records: '" + line + "'");
            view = detail::trim(view.substr(1));
            const std::size_t eq = view.find('=');
            if (eq == std::string_view::npos) continue;  // banner/comment line
            const std::string key{detail::trim(view.substr(0, eq))};
            const std::string value{detail::trim(view.substr(eq + 1))};
            if (key == "duration_s") m.duration = detail::parse_double(value, key);
            else if (key == "emitter_seed") m.emitter.seed = detail::parse_int<std::uint64_t>(value, key);
            else if (key == "detector_seed") m.detector_seed = detail::parse_int<std::uint64_t>(value, key);
            else if (key == "rng") m.rng = value;
            else if (key == "k_hz") m.emitter.rates.k = detail::parse_double(value, key);
            else if (key == "inv_t1_hz") m.emitter.rates.inv_T1 = detail::parse_double(value, key);
            else if (key == "gamma12_hz") m.emitter.rates.gamma12 = detail::parse_double(value, key);
            else if (key == "gamma20_hz") m.emitter.rates.gamma20 = detail::parse_double(value, key);
            else if (key == "phi_f") m.emitter.phi_F = detail::parse_double(value, key);
            else if (key == "burn_in_s") m.emitter.burn_in = detail::parse_double(value, key);
            else if (key == "efficiency") m.detector.efficiency = detail::parse_double(value, key);
            else if (key == "background_cps") m.detector.background_rate = detail::parse_double(value, key);
            else if (key == "dead_time_s") m.detector.dead_time = detail::parse_double(value, key);
            else if (key == "jitter_s") m.detector.jitter_sigma = detail::parse_double(value, key);
            else if (key == "electronic_delay_s") m.detector.electronic_delay = detail::parse_double(value, key);
            else if (key == "n_records") expected_records = detail::parse_int<std::size_t>(value, key);
            else m.extra[key] = value;
            continue;
        }
        header_done = true;
        const std::size_t comma = view.find(',');
        if (comma == std::string_view::npos || comma != 1 || (view[0] != 'A' && view[0] != 'B'))
            throw data_error("bad stream record '" + line + "' (want 'A,<ps>' or 'B,<ps>')");
        DetectionRecord rec;
        rec.channel = view[0] == 'A' ? Channel::A : Channel::B;
        rec.t_ps = detail::parse_int<std::int64_t>(detail::trim(view.substr(comma + 1)), "timestamp");
        if (rec.t_ps < last_ts)
            throw data_error("stream timestamps must be ascending");
        last_ts = rec.t_ps;
        stream.records.push_back(rec);
    }
    m.emitter.duration = m.duration;
    if (expected_records != 0 && expected_records != stream.records.size())
        throw data_error("record count mismatch: header says " + std::to_string(expected_records) +
                         ", file has " + std::to_string(stream.records.size()));
    return stream;
}

inline void write_stream_file(const std::filesystem::path& path, const PhotonStream& stream) {
    atomic_write(path, serialize_stream(stream));
}

inline PhotonStream read_stream_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open stream file '" + path.string() + "'");
    return parse_stream(in);
}

// ---------------------------------------------------------------------------
// Histogram CSV: '#' metadata header, then a column header row and
// "delay_ns,counts[,g2,g2_err]" rows. The delay_ns column is presentational;
// parsing reconstructs the exact axis from the ps metadata.
// ---------------------------------------------------------------------------

inline std::string serialize_histogram(const CoincidenceHistogram& hist) {
    using detail::format_double;
    std::ostringstream out;
    out << "# photonstat-histogram v1\n";
    out << "# bin_width_ps=" << hist.bin_width_ps << "\n";
    out << "# delay_min_ps=" << hist.delay_min_ps << "\n";
    out << "# n_bins=" << hist.size() << "\n";
    out << "# n_starts=" << hist.n_starts << "\n";
    out << "# n_stops=" << hist.n_stops << "\n";
    out << "# total_time_s=" << format_double(hist.total_time) << "\n";
    out << "# normalized=" << (hist.normalized ? 1 : 0) << "\n";
    out << "# empty_channel_warning=" << (hist.empty_channel_warning ? 1 : 0) << "\n";
    for (const auto& [key, value] : hist.meta) out << "# " << key << "=" << value << "\n";
    out << (hist.normalized ? "delay_ns,counts,g2,g2_err\n" : "delay_ns,counts\n");
    for (std::size_t i = 0; i < hist.size(); ++i) {
        out << format_double(hist.bin_center_ns(i)) << ","
            << (i < hist.counts.size() ? hist.counts[i] : 0);
        if (hist.normalized)
            out << "," << format_double(hist.g2[i]) << "," << format_double(hist.g2_err[i]);
        out << "\n";
    }
    return out.str();
}

inline CoincidenceHistogram parse_histogram(std::istream& in) {
    CoincidenceHistogram hist;
    std::string line;
    bool saw_column_header = false;
    while (std::getline(in, line)) {
        std::string_view view = detail::trim(line);
        if (view.empty()) continue;
        if (view.front() == '#') {
            view = detail::trim(view.substr(1));
            const std::size_t eq = view.find('=');
            if (eq == std::string_view::npos) continue;
            const std::string key{detail::trim(view.substr(0, eq))};
            const std::string value{detail::trim(view.substr(eq + 1))};
            if (key == "bin_width_ps") hist.bin_width_ps = detail::parse_int<std::int64_t>(value, key);
            else if (key == "delay_min_ps") hist.delay_min_ps = detail::parse_int<std::int64_t>(value, key);
            else if (key == "n_bins") continue;  // implied by the rows
            else if (key == "n_starts") hist.n_starts = detail::parse_int<std::uint64_t>(value, key);
            else if (key == "n_stops") hist.n_stops = detail::parse_int<std::uint64_t>(value, key);
            else if (key == "total_time_s") hist.total_time = detail::parse_double(value, key);
            else if (key == "normalized") hist.normalized = value == "1";
            else if (key == "empty_channel_warning") hist.empty_channel_warning = value == "1";
            else hist.meta[key] = value;
            continue;
        }
        if (!saw_column_header) {  // the delay_ns,... header row
            saw_column_header = true;
            continue;
        }
        std::vector<std::string_view> fields;
        std::size_t pos = 0;
        while (pos <= view.size()) {
            const std::size_t comma = view.find(',', pos);
            fields.push_back(detail::trim(view.substr(pos, comma == std::string_view::npos
                                                               ? std::string_view::npos
                                                               : comma - pos)));
            if (comma == std::string_view::npos) break;
            pos = comma + 1;
        }
        if (fields.size() != (hist.normalized ? 4u : 2u))
            throw data_error("bad histogram row '" + line + "'");
        hist.counts.push_back(detail::parse_int<std::int64_t>(fields[1], "counts"));
        if (hist.normalized) {
            hist.g2.push_back(detail::parse_double(fields[2], "g2"));
            hist.g2_err.push_back(detail::parse_double(fields[3], "g2_err"));
        }
    }
    if (hist.counts.empty()) throw data_error("histogram file has no bins");
    if (hist.bin_width_ps <= 0) throw data_error("histogram file lacks bin_width_ps metadata");
    return hist;
}

inline void write_histogram_file(const std::filesystem::path& path,
                                 const CoincidenceHistogram& hist) {
    atomic_write(path, serialize_histogram(hist));
}

inline CoincidenceHistogram read_histogram_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open histogram file '" + path.string() + "'");
    return parse_histogram(in);
}

// ---------------------------------------------------------------------------
// Generic numeric CSV input (saturation curves, decay histograms, spectra):
// '#' comments and an optional non-numeric header row are skipped.
// ---------------------------------------------------------------------------

inline std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path,
                                                         std::size_t min_columns) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open '" + path.string() + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::string_view view = detail::trim(line);
        if (view.empty() || view.front() == '#') continue;
        std::vector<double> row;
        std::size_t pos = 0;
        bool numeric = true;
        while (pos <= view.size()) {
            const std::size_t comma = view.find(',', pos);
            const std::string_view f = detail::trim(
                view.substr(pos, comma == std::string_view::npos ? std::string_view::npos
                                                                 : comma - pos));
            double v = 0.0;
            const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
            if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
                numeric = false;
                break;
            }
            row.push_back(v);
            if (comma == std::string_view::npos) break;
            pos = comma + 1;
        }
        if (!numeric) {
            if (rows.empty()) continue;  // header row
            throw data_error("non-numeric row in '" + path.string() + "': " + line);
        }
        if (row.size() < min_columns)
            throw data_error("row with fewer than " + std::to_string(min_columns) +
                             " columns in '" + path.string() + "'");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw data_error("no data rows in '" + path.string() + "'");
    return rows;
}

// Two-column CSV writer for model curves and reports.
inline std::string serialize_table(const std::vector<std::string>& columns,
                                   const std::vector<std::vector<double>>& rows) {
    std::ostringstream out;
    for (std::size_t i = 0; i < columns.size(); ++i)
        out << columns[i] << (i + 1 < columns.size() ? "," : "\n");
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << detail::format_double(row[i]) << (i + 1 < row.size() ? "," : "\n");
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Minimal static SVG line plot (one or more series over a shared x axis).
// ---------------------------------------------------------------------------

struct SvgSeries {
    std::string label;
    std::vector<double> y;
    std::string color = "#1f77b4";
};

inline std::string svg_line_plot(const std::string& title, const std::string& x_label,
                                 const std::string& y_label, const std::vector<double>& x,
                                 const std::vector<SvgSeries>& series) {
    if (x.empty() || series.empty()) throw parameter_error("plot needs data");
    const double width = 800, height = 500;
    const double ml = 70, mr = 20, mt = 40, mb = 50;

    double x_min = x.front(), x_max = x.front();
    for (double v : x) { x_min = std::min(x_min, v); x_max = std::max(x_max, v); }
    double y_min = series[0].y.at(0), y_max = y_min;
    for (const auto& s : series) {
        if (s.y.size() != x.size()) throw parameter_error("series length mismatch");
        for (double v : s.y) { y_min = std::min(y_min, v); y_max = std::max(y_max, v); }
    }
    if (x_max == x_min) x_max = x_min + 1.0;
    if (y_max == y_min) y_max = y_min + 1.0;
    const double y_pad = 0.05 * (y_max - y_min);
    y_min -= y_pad;
    y_max += y_pad;

    auto px = [&](double v) { return ml + (v - x_min) / (x_max - x_min) * (width - ml - mr); };
    auto py = [&](double v) { return height - mb - (v - y_min) / (y_max - y_min) * (height - mt - mb); };
    auto num = [](double v) {
        std::ostringstream s;
        s.precision(6);
        s << v;
        return s.str();
    };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
        << title << "</text>\n";

    for (int i = 0; i <= 5; ++i) {
        const double fx = x_min + (x_max - x_min) * i / 5.0;
        const double fy = y_min + (y_max - y_min) * i / 5.0;
        out << "<line x1=\"" << px(fx) << "\" y1=\"" << height - mb << "\" x2=\"" << px(fx)
            << "\" y2=\"" << height - mb + 5 << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << px(fx) << "\" y=\"" << height - mb + 20
            << "\" text-anchor=\"middle\" font-size=\"11\">" << num(fx) << "</text>\n";
        out << "<line x1=\"" << ml - 5 << "\" y1=\"" << py(fy) << "\" x2=\"" << ml << "\" y2=\""
            << py(fy) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << ml - 8 << "\" y=\"" << py(fy) + 4
            << "\" text-anchor=\"end\" font-size=\"11\">" << num(fy) << "</text>\n";
    }
    out << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr
        << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << height - mb << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << (ml + width - mr) / 2 << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\" font-size=\"13\">" << x_label << "</text>\n";
    out << "<text x=\"18\" y=\"" << (mt + height - mb) / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
        << (mt + height - mb) / 2 << ")\">" << y_label << "</text>\n";

    const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    for (std::size_t s = 0; s < series.size(); ++s) {
        const std::string color =
            series[s].color.empty() ? palette[s % 4] : series[s].color;
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < x.size(); ++i)
            out << px(x[i]) << "," << py(series[s].y[i]) << " ";
        out << "\"/>\n";
        out << "<text x=\"" << width - mr - 10 << "\" y=\"" << mt + 16 * (s + 1)
            << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << color << "\">"
            << series[s].label << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace photonstat
