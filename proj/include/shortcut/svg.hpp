#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "shortcut/errors.hpp"
#include "shortcut/tensor.hpp"

namespace shortcut {

// Fixed-canvas scatter/line plotter emitting standalone SVG text. World
// coordinates map into an 800x800 canvas with margins for axes and labels.
class SvgFigure {
 public:
  static constexpr int kCanvas = 800;
  static constexpr int kMargin = 60;

  SvgFigure(std::string title, double xmin, double xmax, double ymin, double ymax)
      : title_(std::move(title)), xmin_(xmin), xmax_(xmax), ymin_(ymin), ymax_(ymax) {
    if (xmax_ <= xmin_ || ymax_ <= ymin_)
      throw ContractError("SvgFigure: empty world rectangle");
  }

  void add_points(const Tensor& pts, const std::string& color, const std::string& label,
                  double radius = 2.0) {
    std::ostringstream ss;
    ss << "  <g fill=\"" << color << "\" fill-opacity=\"0.6\">\n";
    for (int r = 0; r < pts.rows; ++r)
      ss << "    <circle cx=\"" << px(pts.at(r, 0)) << "\" cy=\"" << py(pts.at(r, 1))
         << "\" r=\"" << radius << "\"/>\n";
    ss << "  </g>\n";
    body_ += ss.str();
    legend_.push_back({label, color});
  }

  void add_polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                    double width = 1.0) {
    if (pts.size() < 2) return;
    std::ostringstream ss;
    ss << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width
       << "\" stroke-opacity=\"0.7\" points=\"";
    for (const auto& [x, y] : pts) ss << px(x) << "," << py(y) << " ";
    ss << "\"/>\n";
    body_ += ss.str();
  }

  void add_line_series(const std::vector<double>& xs, const std::vector<double>& ys,
                       const std::string& color, const std::string& label) {
    if (xs.size() != ys.size()) throw ContractError("SvgFigure: series length mismatch");
    std::vector<std::pair<double, double>> pts;
    for (size_t i = 0; i < xs.size(); ++i) pts.emplace_back(xs[i], ys[i]);
    add_polyline(pts, color, 2.0);
    std::ostringstream ss;
    ss << "  <g fill=\"" << color << "\">\n";
    for (const auto& [x, y] : pts)
      ss << "    <circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\"/>\n";
    ss << "  </g>\n";
    body_ += ss.str();
    legend_.push_back({label, color});
  }

  std::string render() const {
    std::ostringstream ss;
    ss << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    ss << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kCanvas << "\" height=\""
       << kCanvas << "\" viewBox=\"0 0 " << kCanvas << " " << kCanvas << "\">\n";
    ss << "  <rect width=\"" << kCanvas << "\" height=\"" << kCanvas << "\" fill=\"white\"/>\n";
    // axes frame
    ss << "  <rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << plot_size()
       << "\" height=\"" << plot_size()
       << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
    ss << "  <text x=\"" << kCanvas / 2 << "\" y=\"30\" text-anchor=\"middle\" font-size=\"20\">"
       << escape(title_) << "</text>\n";
    // axis labels with world ranges
    ss << "  <text x=\"" << kCanvas / 2 << "\" y=\"" << kCanvas - 15
       << "\" text-anchor=\"middle\" font-size=\"14\">x  [" << xmin_ << ", " << xmax_
       << "]</text>\n";
    ss << "  <text x=\"20\" y=\"" << kCanvas / 2 << "\" text-anchor=\"middle\" font-size=\"14\" "
       << "transform=\"rotate(-90 20 " << kCanvas / 2 << ")\">y  [" << ymin_ << ", " << ymax_
       << "]</text>\n";
    ss << body_;
    // legend
    int ly = kMargin + 15;
    for (const auto& [label, color] : legend_) {
      if (label.empty()) continue;
      ss << "  <rect x=\"" << kMargin + 10 << "\" y=\"" << ly - 10
         << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
      ss << "  <text x=\"" << kMargin + 28 << "\" y=\"" << ly << "\" font-size=\"14\">"
         << escape(label) << "</text>\n";
      ly += 20;
    }
    ss << "</svg>\n";
    return ss.str();
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw FileError("cannot write figure: " + path);
    f << render();
  }

 private:
  static int plot_size() { return kCanvas - 2 * kMargin; }
  double px(double x) const {
    return kMargin + (x - xmin_) / (xmax_ - xmin_) * plot_size();
  }
  double py(double y) const {
    return kCanvas - kMargin - (y - ymin_) / (ymax_ - ymin_) * plot_size();
  }
  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '&') out += "&amp;";
      else if (c == '<') out += "&lt;";
      else if (c == '>') out += "&gt;";
      else out += c;
    }
    return out;
  }

  std::string title_;
  double xmin_, xmax_, ymin_, ymax_;
  std::string body_;
  std::vector<std::pair<std::string, std::string>> legend_;
};

}  // namespace shortcut
