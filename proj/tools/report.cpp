#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "debias/error.hpp"
#include "debias/evaluation.hpp"

namespace debias::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kWidth = 720;
constexpr double kHeight = 320;
constexpr double kLeft = 64;
constexpr double kRight = 24;
constexpr double kTop = 36;
constexpr double kBottom = 48;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;  // NaN breaks the line
  bool bars = false;
};

std::string Num(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

std::string Escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '<')
      out += "&lt;";
    else if (ch == '>')
      out += "&gt;";
    else if (ch == '&')
      out += "&amp;";
    else
      out += ch;
  }
  return out;
}

// One panel with shared axes; `shade` marks x positions drawn with a grey band.
std::string Plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                 const std::vector<Series>& series, const std::vector<double>& shade = {}) {
  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -x0;
  double y0 = x0;
  double y1 = -x0;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  for (const auto& s : series)
    if (s.bars) y0 = std::min(y0, 0.0);
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const double w = kWidth - kLeft - kRight;
  const double h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * w; };
  auto py = [&](double y) { return kTop + (y1 - y) / (y1 - y0) * h; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << Escape(title)
     << "</text>\n";
  const double step = series.empty() || series[0].x.size() < 2 ? 1.0 : (x1 - x0) / (series[0].x.size() - 1);
  for (double x : shade)
    os << "<rect x=\"" << px(x - step / 2) << "\" y=\"" << kTop << "\" width=\"" << std::max(1.0, w * step / (x1 - x0))
       << "\" height=\"" << h << "\" fill=\"#eeeeee\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + h << "\" x2=\"" << kLeft + w << "\" y2=\"" << kTop + h
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + h
     << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = x0 + (x1 - x0) * t / 4;
    const double yv = y0 + (y1 - y0) * t / 4;
    os << "<text x=\"" << px(xv) << "\" y=\"" << kTop + h + 16 << "\" text-anchor=\"middle\">" << Num(xv)
       << "</text>\n";
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << Num(yv) << "</text>\n";
  }
  os << "<text x=\"" << kLeft + w / 2 << "\" y=\"" << kHeight - 8 << "\" text-anchor=\"middle\">" << Escape(xlabel)
     << "</text>\n";
  os << "<text transform=\"translate(14," << kTop + h / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << Escape(ylabel) << "</text>\n";

  for (size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    if (s.bars) {
      const double bw = std::max(1.0, 0.8 * w * step / (x1 - x0) / series.size());
      for (size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.y[i])) continue;
        const double top = std::min(py(s.y[i]), py(0.0));
        os << "<rect x=\"" << px(s.x[i]) - 0.4 * w * step / (x1 - x0) + k * bw << "\" y=\"" << top
           << "\" width=\"" << bw << "\" height=\"" << std::abs(py(s.y[i]) - py(0.0)) << "\" fill=\"" << color
           << "\"/>\n";
      }
    } else {
      std::ostringstream pts;
      auto flush = [&] {
        if (!pts.str().empty())
          os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts.str()
             << "\"/>\n";
        pts.str("");
      };
      for (size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.y[i])) {
          flush();
          continue;
        }
        pts << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
      }
      flush();
    }
    os << "<text x=\"" << kLeft + w - 4 << "\" y=\"" << kTop + 14 + 14 * k << "\" text-anchor=\"end\" fill=\""
       << color << "\">" << Escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<double> Positions(size_t n) {
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i);
  return x;
}

std::string ProfileFigure(const json& j) {
  const AttentionProfile p = AttentionProfileFromJson(j);
  std::vector<double> shade;
  for (size_t i = 1; i < p.occupancy.size(); ++i)
    if (p.occupancy[i] > 0 && p.occupancy[i] < kHighVarianceOccupancy) shade.push_back(static_cast<double>(i));
  Series pre{"mean pre-softmax (SOT excluded)", Positions(p.mean_pre_softmax.size()), p.mean_pre_softmax};
  std::string title = "EOT attention by position, " + std::to_string(p.n_captions) + " captions";
  return Plot(title, "token position", "pre-softmax score", {pre}, shade);
}

std::string ProfilePostFigure(const json& j) {
  const AttentionProfile p = AttentionProfileFromJson(j);
  Series post{"mean post-softmax (SOT included)", Positions(p.mean_post_softmax.size()), p.mean_post_softmax, true};
  return Plot("EOT attention weight, argmax at " + std::to_string(p.PostSoftmaxArgmax()), "token position",
              "attention weight", {post});
}

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

std::string ProbeFigure(std::istream& in, const fs::path& path) {
  std::string line;
  std::getline(in, line);
  const auto header = SplitCsv(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::kParse, path.string() + ": missing column " + name);
    return static_cast<size_t>(it - header.begin());
  };
  const size_t t2i = column("t2i_r1");
  const size_t i2t = column("i2t_r1");
  Series a{"text-to-image R@1", {}, {}, true};
  Series b{"image-to-text R@1", {}, {}, true};
  std::string labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = SplitCsv(line);
    if (cells.size() != header.size()) throw Error(ErrorCode::kParse, path.string() + ": ragged row");
    const double x = static_cast<double>(a.x.size());
    a.x.push_back(x);
    b.x.push_back(x);
    a.y.push_back(std::stod(cells[t2i]));
    b.y.push_back(std::stod(cells[i2t]));
    labels += (labels.empty() ? "" : ", ") + std::to_string(a.x.size() - 1) + "=" + cells[0];
  }
  return Plot("Probe recall@1", "probe (" + labels + ")", "recall@1", {a, b});
}

std::string MetricsFigure(std::istream& in, const fs::path& path) {
  Series total{"total", {}, {}};
  Series shrt{"short", {}, {}};
  Series lng{"long", {}, {}};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
    }
    const double step = j.at("step").get<double>();
    for (auto* s : {&total, &shrt, &lng}) s->x.push_back(step);
    total.y.push_back(j.at("loss_total").get<double>());
    shrt.y.push_back(j.at("loss_s").get<double>());
    lng.y.push_back(j.at("loss_l").get<double>());
  }
  return Plot("Training loss", "step", "loss", {total, shrt, lng});
}

void Save(const fs::path& path, const std::string& svg, std::vector<fs::path>& written) {
  if (std::find(written.begin(), written.end(), path) != written.end())
    throw Error(ErrorCode::kInvalidArgument, "two inputs map to " + path.string());
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << svg)) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  written.push_back(path);
}

void WriteFigures(std::istream& in, const fs::path& path, const fs::path& out_dir, std::vector<fs::path>& written) {
  const std::string stem = path.stem().string();
  const std::string ext = path.extension().string();
  if (ext == ".csv") {
    Save(out_dir / (stem + ".svg"), ProbeFigure(in, path), written);
  } else if (ext == ".jsonl") {
    Save(out_dir / (stem + ".svg"), MetricsFigure(in, path), written);
  } else if (ext == ".json") {
    const json j = json::parse(in);
    if (j.value("schema", "") != kProfileSchema)
      throw Error(ErrorCode::kInvalidArgument, path.string() + ": no figure for this schema");
    Save(out_dir / (stem + ".svg"), ProfileFigure(j), written);
    Save(out_dir / (stem + "_post.svg"), ProfilePostFigure(j), written);
  } else {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": expected .csv, .json or .jsonl");
  }
}

}  // namespace

std::vector<fs::path> WriteReport(const std::vector<fs::path>& inputs, const fs::path& out_dir) {
  std::vector<fs::path> written;
  for (const auto& path : inputs) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
    try {
      WriteFigures(in, path, out_dir, written);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kParse, path.string() + ": non-numeric value");
    }
  }
  return written;
}

}  // namespace debias::cli
