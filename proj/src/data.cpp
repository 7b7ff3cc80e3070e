#include "spn/data.hpp"

#include "spn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace F = torch::nn::functional;

namespace spn {

namespace {

// 8-bit RGB cv::Mat -> 3 x H x W float in [-1, 1].
torch::Tensor rgb_mat_to_tensor(const cv::Mat& rgb) {
    cv::Mat contiguous = rgb.isContinuous() ? rgb : rgb.clone();
    auto t = torch::from_blob(contiguous.data, {contiguous.rows, contiguous.cols, 3}, torch::kUInt8)
                 .permute({2, 0, 1})
                 .to(torch::kFloat32);
    return t / 127.5f - 1.0f;
}

cv::Mat tensor_to_rgb_mat(const torch::Tensor& image) {
    auto bytes = ((image.detach().to(torch::kFloat32).clamp(-1.0, 1.0) + 1.0f) * 127.5f)
                     .round()
                     .to(torch::kUInt8)
                     .permute({1, 2, 0})
                     .contiguous();
    cv::Mat rgb(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC3, bytes.data_ptr<uint8_t>());
    return rgb.clone();
}

torch::Tensor gray_mat_to_mask(const cv::Mat& gray) {
    cv::Mat binary;
    cv::threshold(gray, binary, 127, 1, cv::THRESH_BINARY); // >= 128 -> 1
    cv::Mat contiguous = binary.isContinuous() ? binary : binary.clone();
    return torch::from_blob(contiguous.data, {1, contiguous.rows, contiguous.cols}, torch::kUInt8)
        .to(torch::kFloat32);
}

cv::Mat mask_to_gray_mat(const torch::Tensor& mask) {
    auto bytes = (mask.detach().to(torch::kFloat32)[0] * 255.0f).to(torch::kUInt8).contiguous();
    cv::Mat gray(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC1, bytes.data_ptr<uint8_t>());
    return gray.clone();
}

cv::Mat prepare_rgb(const cv::Mat& bgr, std::optional<int64_t> size, bool center_crop) {
    cv::Mat img = bgr;
    if (center_crop) {
        const int side = std::min(img.cols, img.rows);
        const cv::Rect roi((img.cols - side) / 2, (img.rows - side) / 2, side, side);
        img = img(roi);
    }
    if (size) {
        const int s = static_cast<int>(*size);
        if (img.cols != s || img.rows != s) {
            const bool shrinking = img.cols > s || img.rows > s;
            cv::Mat resized;
            cv::resize(img, resized, cv::Size(s, s), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
            img = resized;
        }
    }
    cv::Mat rgb;
    cv::cvtColor(img, rgb, cv::COLOR_BGR2RGB);
    return rgb;
}

cv::Mat resize_gray_nearest(const cv::Mat& gray, int64_t size) {
    if (size <= 0 || (gray.cols == size && gray.rows == size)) return gray;
    cv::Mat out;
    cv::resize(gray, out, cv::Size(static_cast<int>(size), static_cast<int>(size)), 0, 0, cv::INTER_NEAREST);
    return out;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

double uniform_real(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

cv::Scalar random_color(std::mt19937_64& rng) {
    return cv::Scalar(uniform_int(rng, 0, 255), uniform_int(rng, 0, 255), uniform_int(rng, 0, 255));
}

cv::Mat draw_synthetic_image(uint64_t seed, int size) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 0x1234567ULL);
    cv::Mat img(size, size, CV_8UC3);

    const cv::Scalar c0 = random_color(rng);
    const cv::Scalar c1 = random_color(rng);
    const double angle = uniform_real(rng, 0.0, 2.0 * M_PI);
    const double dx = std::cos(angle), dy = std::sin(angle);
    const double span = (std::abs(dx) + std::abs(dy)) * (size - 1);
    const double offset = std::min(0.0, dx) * (size - 1) + std::min(0.0, dy) * (size - 1);
    for (int y = 0; y < size; ++y) {
        auto* row = img.ptr<cv::Vec3b>(y);
        for (int x = 0; x < size; ++x) {
            const double t = span > 0 ? ((x * dx + y * dy) - offset) / span : 0.0;
            for (int c = 0; c < 3; ++c)
                row[x][c] = cv::saturate_cast<uint8_t>(c0[c] + (c1[c] - c0[c]) * t);
        }
    }

    const int shapes = uniform_int(rng, 2, 5);
    for (int s = 0; s < shapes; ++s) {
        const cv::Scalar color = random_color(rng);
        const int kind = uniform_int(rng, 0, 2);
        const int cx = uniform_int(rng, 0, size - 1);
        const int cy = uniform_int(rng, 0, size - 1);
        const int w = uniform_int(rng, size / 8, size / 2);
        const int h = uniform_int(rng, size / 8, size / 2);
        if (kind == 0) {
            cv::rectangle(img, cv::Point(cx - w / 2, cy - h / 2), cv::Point(cx + w / 2, cy + h / 2), color,
                          cv::FILLED, cv::LINE_8);
        } else if (kind == 1) {
            const double rot = uniform_real(rng, 0.0, 180.0);
            cv::ellipse(img, cv::Point(cx, cy), cv::Size(w / 2, h / 2), rot, 0, 360, color, cv::FILLED, cv::LINE_8);
        } else {
            // Parallel stripes clipped to a box.
            const int count = uniform_int(rng, 2, 4);
            const int thickness = std::max(1, size / 32);
            const bool vertical = uniform_int(rng, 0, 1) == 1;
            const int x0 = cx - w / 2, y0 = cy - h / 2;
            for (int k = 0; k < count; ++k) {
                const int pos = (k * 2 + 1) * (vertical ? w : h) / (2 * count);
                if (vertical)
                    cv::line(img, cv::Point(x0 + pos, y0), cv::Point(x0 + pos, y0 + h), color, thickness, cv::LINE_8);
                else
                    cv::line(img, cv::Point(x0, y0 + pos), cv::Point(x0 + w, y0 + pos), color, thickness, cv::LINE_8);
            }
        }
    }
    return img; // drawn directly in RGB order
}

void draw_stroke(cv::Mat& canvas, std::mt19937_64& rng, int size) {
    const int vertices = uniform_int(rng, 4, 10);
    const int max_thickness = std::max(3, size / 5);
    const int thickness = uniform_int(rng, std::max(2, size / 32), max_thickness);
    cv::Point p(uniform_int(rng, 0, size - 1), uniform_int(rng, 0, size - 1));
    double heading = uniform_real(rng, 0.0, 2.0 * M_PI);
    for (int v = 0; v < vertices; ++v) {
        heading += uniform_real(rng, -1.2, 1.2);
        const double len = uniform_real(rng, size / 10.0, size / 3.0);
        cv::Point q(static_cast<int>(p.x + len * std::cos(heading)), static_cast<int>(p.y + len * std::sin(heading)));
        q.x = std::clamp(q.x, 0, size - 1);
        q.y = std::clamp(q.y, 0, size - 1);
        cv::line(canvas, p, q, cv::Scalar(255), thickness, cv::LINE_8);
        cv::circle(canvas, q, thickness / 2, cv::Scalar(255), cv::FILLED, cv::LINE_8);
        p = q;
    }
}

} // namespace

ImageTensor::ImageTensor(torch::Tensor data, bool check_range) : data_(std::move(data)) {
    if (data_.dim() != 3) throw ShapeError("ImageTensor expects C x H x W, got rank " + std::to_string(data_.dim()));
    if (!torch::isfinite(data_).all().item<bool>()) throw Error("ImageTensor contains non-finite values");
    if (check_range && (data_.min().item<double>() < -1.0 || data_.max().item<double>() > 1.0))
        throw Error("ImageTensor values outside [-1, 1]");
}

MaskTensor::MaskTensor(torch::Tensor data) : data_(std::move(data)) {
    if (data_.dim() != 3 || data_.size(0) != 1) throw ShapeError("MaskTensor expects 1 x H x W");
    if (!((data_ == 0) | (data_ == 1)).all().item<bool>()) throw Error("MaskTensor must be binary");
}

const std::vector<MaskBucket>& canonical_buckets() {
    static const std::vector<MaskBucket> buckets = {
        {0.0, 0.1, "0-10%"},  {0.1, 0.2, "10-20%"}, {0.2, 0.3, "20-30%"},
        {0.3, 0.4, "30-40%"}, {0.4, 0.5, "40-50%"}, {0.5, 0.6, "50-60%"},
    };
    return buckets;
}

void require_pyramid_size(int64_t size, int64_t levels) {
    if (levels < 1) throw ConfigError("pyramid levels must be >= 1");
    const int64_t step = int64_t{1} << (levels - 1);
    if (size <= 0 || size % step != 0)
        throw ConfigError("size " + std::to_string(size) + " is not divisible by 2^(L-1) = " + std::to_string(step));
}

ImageTensor load_image(const std::filesystem::path& path, int64_t size, bool center_crop, int64_t levels) {
    require_pyramid_size(size, levels);
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw DecodeError("cannot decode image " + path.string());
    return ImageTensor(rgb_mat_to_tensor(prepare_rgb(bgr, size, center_crop)));
}

MaskTensor load_mask(const std::filesystem::path& path, int64_t size, bool flip_augment, std::mt19937_64* rng) {
    cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (gray.empty()) throw DecodeError("cannot decode mask " + path.string());
    gray = resize_gray_nearest(gray, size);
    auto mask = gray_mat_to_mask(gray);
    if (flip_augment && rng) {
        std::bernoulli_distribution coin(0.5);
        if (coin(*rng)) mask = mask.flip({2});
        if (coin(*rng)) mask = mask.flip({1});
    }
    return MaskTensor(mask.contiguous());
}

ImageTensor decode_image(const std::vector<uint8_t>& png, std::optional<int64_t> size, bool center_crop) {
    if (png.empty()) throw DecodeError("empty image payload");
    cv::Mat bgr = cv::imdecode(png, cv::IMREAD_COLOR);
    if (bgr.empty()) throw DecodeError("cannot decode image payload");
    return ImageTensor(rgb_mat_to_tensor(prepare_rgb(bgr, size, center_crop)));
}

MaskTensor decode_mask(const std::vector<uint8_t>& png) {
    if (png.empty()) throw DecodeError("empty mask payload");
    cv::Mat gray = cv::imdecode(png, cv::IMREAD_GRAYSCALE);
    if (gray.empty()) throw DecodeError("cannot decode mask payload");
    return MaskTensor(gray_mat_to_mask(gray));
}

std::vector<uint8_t> encode_png(const ImageTensor& image) {
    cv::Mat rgb = tensor_to_rgb_mat(image.tensor()), bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    std::vector<uint8_t> out;
    if (!cv::imencode(".png", bgr, out)) throw Error("PNG encoding failed");
    return out;
}

std::vector<uint8_t> encode_png(const MaskTensor& mask) {
    std::vector<uint8_t> out;
    if (!cv::imencode(".png", mask_to_gray_mat(mask.tensor()), out)) throw Error("PNG encoding failed");
    return out;
}

void save_image(const ImageTensor& image, const std::filesystem::path& path) {
    cv::Mat rgb = tensor_to_rgb_mat(image.tensor()), bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    if (!cv::imwrite(path.string(), bgr)) throw Error("cannot write image " + path.string());
}

void save_mask(const MaskTensor& mask, const std::filesystem::path& path) {
    if (!cv::imwrite(path.string(), mask_to_gray_mat(mask.tensor()))) throw Error("cannot write mask " + path.string());
}

double mask_ratio(const MaskTensor& mask) {
    const auto ones = mask.tensor().sum().item<double>();
    return ones / static_cast<double>(mask.height() * mask.width());
}

MaskBucket bucket_of_ratio(double ratio) {
    for (const auto& b : canonical_buckets())
        if (b.contains(ratio)) return b;
    throw ProtocolError("mask ratio " + std::to_string(ratio) + " outside the evaluation protocol (0, 0.6]");
}

MaskBucket bucket_of(const MaskTensor& mask) {
    // Integer arithmetic: ratio in (i/10, (i+1)/10]  <=>  i*T < 10*n <= (i+1)*T.
    const auto ones = static_cast<int64_t>(mask.tensor().sum().item<double>());
    const int64_t total = mask.height() * mask.width();
    const auto& buckets = canonical_buckets();
    for (std::size_t i = 0; i < buckets.size(); ++i) {
        const int64_t lo = static_cast<int64_t>(i) * total;
        const int64_t hi = static_cast<int64_t>(i + 1) * total;
        if (10 * ones > lo && 10 * ones <= hi) return buckets[i];
    }
    throw ProtocolError("mask ratio " + std::to_string(mask_ratio(mask)) +
                        " outside the evaluation protocol (0, 0.6]");
}

MaskTensor make_stroke_mask(uint64_t seed, int64_t size) {
    const int s = static_cast<int>(size);
    const int64_t total = size * size;
    for (uint64_t attempt = 0;; ++attempt) {
        std::mt19937_64 rng((seed + 1) * 0xD1B54A32D192ED03ULL + attempt * 0x94D049BB133111EBULL);
        cv::Mat canvas = cv::Mat::zeros(s, s, CV_8UC1);
        const int strokes = uniform_int(rng, 1, 4);
        for (int k = 0; k < strokes; ++k) draw_stroke(canvas, rng, s);
        // Add strokes until the lower bound is met; reject and redraw above 0.6.
        for (int extra = 0; extra < 16 && 20 * cv::countNonZero(canvas) <= total; ++extra) draw_stroke(canvas, rng, s);
        const int64_t ones = cv::countNonZero(canvas);
        if (20 * ones > total && 10 * ones <= 6 * total) return MaskTensor(gray_mat_to_mask(canvas));
    }
}

SamplePair make_synthetic_pair(uint64_t seed, int64_t size) {
    cv::Mat rgb = draw_synthetic_image(seed, static_cast<int>(size));
    return SamplePair{ImageTensor(rgb_mat_to_tensor(rgb)), make_stroke_mask(seed, size),
                      "synthetic-" + std::to_string(seed)};
}

torch::Tensor composite(const torch::Tensor& output, const torch::Tensor& input, const torch::Tensor& mask) {
    if (output.sizes() != input.sizes()) throw ShapeError("composite: output and input shapes differ");
    const auto spatial = output.dim();
    if (mask.dim() != spatial || mask.size(-1) != output.size(-1) || mask.size(-2) != output.size(-2))
        throw ShapeError("composite: mask spatial size differs from image");
    return torch::where(mask > 0.5, output, input);
}

ImageTensor composite(const ImageTensor& output, const ImageTensor& input, const MaskTensor& mask) {
    return ImageTensor(composite(output.tensor(), input.tensor(), mask.tensor()), false);
}

torch::Tensor resize_mask_to(const torch::Tensor& mask, int64_t height, int64_t width) {
    if (mask.size(-2) == height && mask.size(-1) == width) return mask;
    const bool batched = mask.dim() == 4;
    auto m = batched ? mask : mask.unsqueeze(0);
    auto out = F::interpolate(m, F::InterpolateFuncOptions()
                                     .size(std::vector<int64_t>{height, width})
                                     .mode(torch::kNearest));
    return batched ? out : out.squeeze(0);
}

torch::Tensor resize_mask(const torch::Tensor& mask, int64_t level) {
    if (level < 1) throw ConfigError("resize_mask: level must be >= 1");
    const int64_t factor = int64_t{1} << (level - 1);
    return resize_mask_to(mask, mask.size(-2) / factor, mask.size(-1) / factor);
}

MaskTensor resize_mask(const MaskTensor& mask, int64_t level) { return MaskTensor(resize_mask(mask.tensor(), level)); }

Batch collate(const std::vector<SamplePair>& pairs) {
    if (pairs.empty()) throw Error("collate: empty batch");
    std::vector<torch::Tensor> images, masks;
    Batch batch;
    for (const auto& p : pairs) {
        if (p.image.height() != p.mask.height() || p.image.width() != p.mask.width())
            throw ShapeError("pair " + p.id + ": image and mask sizes differ");
        images.push_back(p.image.tensor());
        masks.push_back(p.mask.tensor());
        batch.ids.push_back(p.id);
    }
    batch.images = torch::stack(images);
    batch.masks = torch::stack(masks);
    return batch;
}

SyntheticDataset::SyntheticDataset(std::size_t count, int64_t image_size, uint64_t base_seed)
    : count_(count), image_size_(image_size), base_seed_(base_seed) {}

SamplePair SyntheticDataset::get(std::size_t index, std::mt19937_64*) const {
    if (index >= count_) throw std::out_of_range("synthetic dataset index");
    return make_synthetic_pair(base_seed_ + index, image_size_);
}

std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw Error("cannot read manifest " + manifest.string());
    std::vector<std::filesystem::path> out;
    std::string line;
    const auto base = manifest.parent_path();
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty()) continue;
        std::filesystem::path p(line);
        out.push_back(p.is_absolute() ? p : base / p);
    }
    return out;
}

std::vector<std::filesystem::path> scan_pngs(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> out;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (ext == ".png") out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

FileDataset::FileDataset(const std::filesystem::path& manifest, const std::filesystem::path& mask_dir,
                         int64_t image_size, bool center_crop, bool flip_masks, uint64_t pairing_seed, int64_t levels)
    : images_(read_manifest(manifest)), masks_(scan_pngs(mask_dir)), image_size_(image_size),
      center_crop_(center_crop), flip_masks_(flip_masks), levels_(levels) {
    require_pyramid_size(image_size, levels);
    if (images_.empty()) throw Error("manifest lists no images: " + manifest.string());
    if (masks_.empty()) throw Error("no PNG masks under " + mask_dir.string());
    std::mt19937_64 rng(pairing_seed);
    std::uniform_int_distribution<std::size_t> pick(0, masks_.size() - 1);
    pairing_.resize(images_.size());
    for (auto& p : pairing_) p = pick(rng);
}

SamplePair FileDataset::get(std::size_t index, std::mt19937_64* rng) const {
    if (index >= images_.size()) throw std::out_of_range("file dataset index");
    auto image = load_image(images_[index], image_size_, center_crop_, levels_);
    std::size_t mask_index = pairing_[index];
    if (rng) mask_index = std::uniform_int_distribution<std::size_t>(0, masks_.size() - 1)(*rng);
    auto mask = load_mask(masks_[mask_index], image_size_, rng && flip_masks_, rng);
    return SamplePair{std::move(image), std::move(mask), images_[index].filename().string()};
}

} // namespace spn
