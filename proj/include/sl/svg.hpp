#pragma once

#include <string>

#include "sl/common.hpp"

namespace sl::svg {

/// Minimal SVG document builder; enough for scatter plots and grid heatmaps.
class Doc {
 public:
  Doc(double width, double height) : w_(width), h_(height) {
    body_ += format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                    "viewBox=\"0 0 %.0f %.0f\">\n",
                    w_, h_, w_, h_);
    body_ += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& stroke = "none") {
    body_ += format("<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"%s\" "
                    "stroke=\"%s\"/>\n",
                    x, y, w, h, fill.c_str(), stroke.c_str());
  }

  void circle(double cx, double cy, double r, const std::string& fill) {
    body_ += format("<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" fill=\"%s\"/>\n", cx, cy, r,
                    fill.c_str());
  }

  void text(double x, double y, const std::string& s, double size = 12.0,
            const std::string& anchor = "start", const std::string& fill = "#222222") {
    body_ += format("<text x=\"%.2f\" y=\"%.2f\" font-size=\"%.1f\" font-family=\"sans-serif\" "
                    "text-anchor=\"%s\" fill=\"%s\">%s</text>\n",
                    x, y, size, anchor.c_str(), fill.c_str(), escape(s).c_str());
  }

  std::string finish() const { return body_ + "</svg>\n"; }

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

  /// Linear blend between two #rrggbb colors, t in [0, 1].
  static std::string blend(const std::string& a, const std::string& b, double t) {
    auto hex = [](const std::string& c, int i) {
      return std::stoi(c.substr(static_cast<size_t>(1 + 2 * i), 2), nullptr, 16);
    };
    t = t < 0 ? 0 : (t > 1 ? 1 : t);
    int rgb[3];
    for (int i = 0; i < 3; ++i)
      rgb[i] = static_cast<int>((1 - t) * hex(a, i) + t * hex(b, i) + 0.5);
    return format("#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  }

 private:
  double w_, h_;
  std::string body_;
};

}  // namespace sl::svg
