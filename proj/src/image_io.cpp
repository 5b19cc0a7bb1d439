// Copyright 2026 The Imagine Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "imagine/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "imagine/error.hpp"

namespace imagine {

namespace {

cv::Mat read(const std::filesystem::path& path, int flags) {
  cv::Mat mat;
  try {
    mat = cv::imread(path.string(), flags);
  } catch (const cv::Exception& e) {
    throw Error("cannot decode image " + path.string() + ": " + e.what());
  }
  if (mat.empty()) {
    throw Error("cannot read image " + path.string());
  }
  return mat;
}

void write(const cv::Mat& mat, const std::filesystem::path& path) {
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat);
  } catch (const cv::Exception& e) {
    throw Error("cannot write image " + path.string() + ": " + e.what());
  }
  if (!ok) throw Error("cannot write image " + path.string());
}

}  // namespace

torch::Tensor load_image(const std::filesystem::path& path, std::int64_t height,
                         std::int64_t width) {
  cv::Mat bgr = read(path, cv::IMREAD_COLOR);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  if (rgb.rows != height || rgb.cols != width) {
    cv::Mat resized;
    cv::resize(rgb, resized, cv::Size(static_cast<int>(width), static_cast<int>(height)),
               0, 0, cv::INTER_LINEAR);
    rgb = resized;
  }
  cv::Mat scaled;
  rgb.convertTo(scaled, CV_64FC3, 1.0 / 255.0);
  auto hwc = torch::from_blob(scaled.data, {height, width, 3}, torch::kFloat64).clone();
  return hwc.permute({2, 0, 1}).unsqueeze(0).contiguous();
}

torch::Tensor load_mask(const std::filesystem::path& path, std::int64_t height,
                        std::int64_t width) {
  cv::Mat gray = read(path, cv::IMREAD_GRAYSCALE);
  if (gray.rows != height || gray.cols != width) {
    cv::Mat resized;
    cv::resize(gray, resized, cv::Size(static_cast<int>(width), static_cast<int>(height)),
               0, 0, cv::INTER_NEAREST);
    gray = resized;
  }
  cv::Mat binary;
  cv::threshold(gray, binary, 127, 1, cv::THRESH_BINARY);
  cv::Mat as_double;
  binary.convertTo(as_double, CV_64F);
  return torch::from_blob(as_double.data, {1, 1, height, width}, torch::kFloat64).clone();
}

void save_image(const torch::Tensor& image, const std::filesystem::path& path) {
  auto chw = image.dim() == 4 ? image[0] : image;
  if (chw.dim() != 3 || chw.size(0) != 3) {
    throw ShapeError("save_image expects a 3-channel image");
  }
  auto bytes = (chw.detach().to(torch::kFloat64).clamp(0.0, 1.0) * 255.0)
                   .round()
                   .to(torch::kUInt8)
                   .permute({1, 2, 0})
                   .contiguous();
  cv::Mat rgb(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC3,
              bytes.data_ptr<std::uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  write(bgr, path);
}

void save_map(const AttributionMap& map, const std::filesystem::path& path) {
  auto bytes = (map.values.detach().to(torch::kFloat64).clamp(0.0, 1.0) * 255.0)
                   .round()
                   .to(torch::kUInt8)
                   .contiguous();
  cv::Mat gray(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC1,
               bytes.data_ptr<std::uint8_t>());
  write(gray, path);
}

}  // namespace imagine
