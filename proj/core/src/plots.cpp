#include <algorithm>
#include <map>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "advfilter/errors.hpp"
#include "advfilter/experiments.hpp"

namespace fs = std::filesystem;

namespace advfilter {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 480;
constexpr int kLeft = 70, kRight = 30, kTop = 40, kBottom = 60;

using Curve = std::vector<std::pair<double, double>>;

cv::Point to_pixel(double eps, double acc, double eps_max) {
  const double fx = eps_max > 0 ? eps / eps_max : 0.0;
  const int x = kLeft + static_cast<int>(fx * (kWidth - kLeft - kRight));
  const int y = kTop + static_cast<int>((1.0 - acc) * (kHeight - kTop - kBottom));
  return {x, y};
}

void draw_curve(cv::Mat& img, const Curve& curve, double eps_max, const cv::Scalar& colour) {
  std::vector<cv::Point> pts;
  for (const auto& [eps, acc] : curve) pts.push_back(to_pixel(eps, acc, eps_max));
  if (pts.size() > 1) cv::polylines(img, pts, false, colour, 2, cv::LINE_AA);
  for (const auto& p : pts) cv::circle(img, p, 4, colour, cv::FILLED, cv::LINE_AA);
}

void render(const fs::path& path, const std::string& title, const Curve& undefended, const Curve& defended,
            int64_t depth) {
  cv::Mat img(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  double eps_max = 0.0;
  for (const auto* c : {&undefended, &defended}) {
    for (const auto& [eps, acc] : *c) eps_max = std::max(eps_max, eps);
  }
  const cv::Scalar black(0, 0, 0), grey(210, 210, 210);
  const auto font = cv::FONT_HERSHEY_SIMPLEX;
  for (int i = 0; i <= 10; ++i) {
    const double acc = i / 10.0;
    const auto a = to_pixel(0.0, acc, eps_max);
    const auto b = to_pixel(eps_max, acc, eps_max);
    cv::line(img, a, {kWidth - kRight, b.y}, grey, 1);
    if (i % 2 == 0) {
      cv::putText(img, std::to_string(i * 10) + "%", {8, a.y + 5}, font, 0.45, black, 1, cv::LINE_AA);
    }
  }
  for (int i = 0; i <= 4; ++i) {
    const double eps = eps_max * i / 4.0;
    const auto p = to_pixel(eps, 0.0, eps_max);
    cv::line(img, p, {p.x, p.y + 5}, black, 1);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", eps);
    cv::putText(img, buf, {p.x - 15, p.y + 22}, font, 0.45, black, 1, cv::LINE_AA);
  }
  cv::rectangle(img, to_pixel(0.0, 1.0, eps_max), {kWidth - kRight, kHeight - kBottom}, black, 1);
  cv::putText(img, "epsilon", {kWidth / 2 - 30, kHeight - 15}, font, 0.5, black, 1, cv::LINE_AA);
  cv::putText(img, title, {kLeft, 25}, font, 0.6, black, 1, cv::LINE_AA);

  const cv::Scalar blue(200, 80, 20), red(40, 40, 210);
  draw_curve(img, undefended, eps_max, blue);
  draw_curve(img, defended, eps_max, red);
  cv::putText(img, "no defense", {kWidth - 230, kTop + 25}, font, 0.5, blue, 1, cv::LINE_AA);
  if (!defended.empty()) {
    cv::putText(img, "noise + " + std::to_string(depth) + " denoisers", {kWidth - 230, kTop + 45}, font, 0.5, red, 1,
                cv::LINE_AA);
  }
  if (!cv::imwrite(path.string(), img)) throw IoError("cannot write plot: " + path.string());
}

}  // namespace

std::vector<fs::path> emit_plots(const std::vector<EvalRecord>& records, const fs::path& out_dir) {
  if (records.empty()) throw ArgumentError("plot: no records");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory: " + out_dir.string());

  std::vector<fs::path> written;
  const auto csv = out_dir / "sweep.csv";
  write_records_csv(csv, records);
  written.push_back(csv);

  struct Curves {
    Curve undefended, defended;
    int64_t depth = 0;
  };
  std::map<std::pair<DatasetName, TrainingKind>, Curves> groups;
  for (const auto& r : records) {
    auto& g = groups[{r.dataset, r.classifier_kind}];
    if (is_defended(r.condition)) {
      g.defended.emplace_back(r.epsilon, r.accuracy);
      g.depth = std::max(g.depth, r.n_denoisers);
    } else {
      g.undefended.emplace_back(r.epsilon, r.accuracy);
    }
  }
  for (auto& [key, g] : groups) {
    std::sort(g.undefended.begin(), g.undefended.end());
    std::sort(g.defended.begin(), g.defended.end());
    std::string name = "sweep_" + std::string(to_string(key.first));
    if (key.second != TrainingKind::natural) name += "_" + std::string(to_string(key.second));
    const auto path = out_dir / (name + ".png");
    render(path, std::string(to_string(key.first)) + " (" + std::string(to_string(key.second)) + " classifier)",
           g.undefended, g.defended, g.depth);
    written.push_back(path);
  }
  return written;
}

}  // namespace advfilter
