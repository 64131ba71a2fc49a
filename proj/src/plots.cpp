#include "cy/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "cy/error.hpp"

namespace cy {

namespace fs = std::filesystem;

namespace {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> cols;

  const std::vector<double>* col(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? nullptr : &cols[it - header.begin()];
  }
  std::size_t rows() const { return cols.empty() ? 0 : cols.front().size(); }
};

Table read_table(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + file.string());
  Table t;
  std::string line;
  if (!std::getline(in, line)) return t;
  std::stringstream hs(line);
  for (std::string h; std::getline(hs, h, ',');) t.header.push_back(h);
  t.cols.resize(t.header.size());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::size_t i = 0;
    for (std::string cell; std::getline(ls, cell, ',') && i < t.cols.size(); ++i)
      t.cols[i].push_back(cell == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::strtod(cell.c_str(), nullptr));
    for (; i < t.cols.size(); ++i) t.cols[i].push_back(std::numeric_limits<double>::quiet_NaN());
  }
  return t;
}

struct Series {
  std::string label;
  std::string color;
  std::vector<double> x, y;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// Plain SVG line chart. Non-finite samples break the polyline.
std::string line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                       const std::vector<Series>& series) {
  constexpr double W = 720, H = 440, L = 80, R = 170, T = 40, B = 60;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) {
        x0 = std::min(x0, s.x[i]);
        x1 = std::max(x1, s.x[i]);
        y0 = std::min(y0, s.y[i]);
        y1 = std::max(y1, s.y[i]);
      }
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x0 + (x1 - x0) * i / 5, yv = y0 + (y1 - y0) * i / 5;
    os << "<line x1=\"" << px(xv) << "\" y1=\"" << H - B << "\" x2=\"" << px(xv) << "\" y2=\"" << H - B + 5
       << "\" stroke=\"#444\"/><text x=\"" << px(xv) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">"
       << num(xv) << "</text>\n";
    os << "<line x1=\"" << L - 5 << "\" y1=\"" << py(yv) << "\" x2=\"" << L << "\" y2=\"" << py(yv)
       << "\" stroke=\"#444\"/><text x=\"" << L - 8 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << num(yv)
       << "</text>\n";
  }
  os << "<text x=\"" << L + (W - L - R) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">" << xlabel
     << "</text>\n";
  os << "<text transform=\"translate(18," << T + (H - T - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << ylabel
     << "</text>\n";

  int k = 0;
  for (const auto& s : series) {
    // at most ~1500 vertices per line
    const std::size_t stride = std::max<std::size_t>(1, s.x.size() / 1500);
    std::ostringstream pts;
    auto flush = [&]() {
      if (pts.tellp() > 0)
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"" << pts.str()
           << "\"/>\n";
      pts.str("");
      pts.clear();
    };
    for (std::size_t i = 0; i < s.x.size(); i += stride) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        flush();
        continue;
      }
      pts << num(px(s.x[i])) << ',' << num(py(s.y[i])) << ' ';
    }
    flush();
    const double ly = T + 16 + 18 * k++;
    os << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 36 << "\" y2=\"" << ly
       << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/><text x=\"" << W - R + 42 << "\" y=\"" << ly + 4
       << "\">" << s.label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write(const fs::path& file, const std::string& text, std::vector<fs::path>& out) {
  std::ofstream f(file, std::ios::binary);
  if (!f) throw Error(ErrorKind::IoError, "cannot write " + file.string());
  f << text;
  out.push_back(file);
}

std::vector<double> log10_positive(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out[i] = v[i] > 0 ? std::log10(v[i]) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace

std::vector<fs::path> emit_plots(const fs::path& result_dir, const fs::path& out_dir) {
  if (!fs::is_directory(result_dir)) throw Error(ErrorKind::IoError, result_dir.string() + " is not a directory");
  std::vector<fs::path> traces;
  for (const auto& e : fs::recursive_directory_iterator(result_dir))
    if (e.is_regular_file() && e.path().filename() == "trace.csv") traces.push_back(e.path());
  std::sort(traces.begin(), traces.end());

  std::vector<fs::path> written;
  for (const auto& trace : traces) {
    const auto table = read_table(trace);
    const auto* t = table.col("t");
    if (!t || table.rows() == 0) {
      std::cerr << "warning: " << trace.string() << " has no rows, no plot written\n";
      continue;
    }
    const auto dest = out_dir / fs::relative(trace.parent_path(), result_dir);
    fs::create_directories(dest);
    if (const auto* v = table.col("sup_v"))
      write(dest / "sup_v.svg", line_chart("flow speed", "t", "log10 sup|v|", {{"sup |v|", "#1f77b4", *t, log10_positive(*v)}}),
            written);
    if (const auto* l = table.col("lambda"))
      write(dest / "lambda.svg", line_chart("lambda(t)", "t", "lambda", {{"lambda", "#d62728", *t, *l}}), written);

    const auto env_file = trace.parent_path() / "envelope.csv";
    if (fs::exists(env_file)) {
      const auto env = read_table(env_file);
      const auto* et = env.col("t");
      if (et && env.rows() > 0) {
        std::vector<Series> s;
        if (const auto* c = env.col("barrier_hi")) s.push_back({"barrier hi", "#7f7f7f", *et, *c});
        if (const auto* c = env.col("barrier_lo")) s.push_back({"barrier lo", "#bcbd22", *et, *c});
        if (const auto* c = env.col("max_u")) s.push_back({"max u", "#2ca02c", *et, *c});
        if (const auto* c = env.col("min_u")) s.push_back({"min u", "#9467bd", *et, *c});
        write(dest / "envelope.svg", line_chart("barrier envelope", "t", "u", s), written);
      }
    }
  }
  return written;
}

}  // namespace cy
