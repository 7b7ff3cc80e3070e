#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace spn {

// Dense C x H x W float image. RGB images live in [-1, 1].
class ImageTensor {
public:
    ImageTensor() = default;
    // Validates rank and finiteness; `check_range` additionally enforces [-1, 1].
    explicit ImageTensor(torch::Tensor data, bool check_range = true);

    const torch::Tensor& tensor() const { return data_; }
    int64_t channels() const { return data_.size(0); }
    int64_t height() const { return data_.size(1); }
    int64_t width() const { return data_.size(2); }
    bool defined() const { return data_.defined(); }

private:
    torch::Tensor data_;
};

// 1 x H x W binary map, 1 = missing pixel.
class MaskTensor {
public:
    MaskTensor() = default;
    explicit MaskTensor(torch::Tensor data);

    const torch::Tensor& tensor() const { return data_; }
    int64_t height() const { return data_.size(1); }
    int64_t width() const { return data_.size(2); }
    bool defined() const { return data_.defined(); }

private:
    torch::Tensor data_;
};

// Half-open ratio interval (lower, upper].
struct MaskBucket {
    double lower = 0.0;
    double upper = 0.0;
    std::string label;

    bool contains(double ratio) const { return ratio > lower && ratio <= upper; }
    bool operator==(const MaskBucket& other) const { return label == other.label; }
};

// The six reporting buckets (0,0.1], ..., (0.5,0.6].
const std::vector<MaskBucket>& canonical_buckets();

struct SamplePair {
    ImageTensor image;
    MaskTensor mask;
    std::string id;
};

// Checks that `size` is a positive multiple of 2^(levels-1).
void require_pyramid_size(int64_t size, int64_t levels);

ImageTensor load_image(const std::filesystem::path& path, int64_t size, bool center_crop, int64_t levels = 3);
MaskTensor load_mask(const std::filesystem::path& path, int64_t size, bool flip_augment, std::mt19937_64* rng = nullptr);

// In-memory variants of the loaders, used by the HTTP service.
ImageTensor decode_image(const std::vector<uint8_t>& png, std::optional<int64_t> size = std::nullopt,
                         bool center_crop = false);
MaskTensor decode_mask(const std::vector<uint8_t>& png);
std::vector<uint8_t> encode_png(const ImageTensor& image);
std::vector<uint8_t> encode_png(const MaskTensor& mask);

void save_image(const ImageTensor& image, const std::filesystem::path& path);
void save_mask(const MaskTensor& mask, const std::filesystem::path& path);

double mask_ratio(const MaskTensor& mask);
MaskBucket bucket_of_ratio(double ratio);
MaskBucket bucket_of(const MaskTensor& mask);

// Procedural image (gradient + shapes) and free-form stroke mask, fully
// determined by `seed`.
SamplePair make_synthetic_pair(uint64_t seed, int64_t size);
MaskTensor make_stroke_mask(uint64_t seed, int64_t size);

// output*M + input*(1-M); accepts C x H x W or batched B x C x H x W with a
// mask broadcastable over channels.
torch::Tensor composite(const torch::Tensor& output, const torch::Tensor& input, const torch::Tensor& mask);
ImageTensor composite(const ImageTensor& output, const ImageTensor& input, const MaskTensor& mask);

// Nearest-neighbour downsample to (H / 2^(level-1), W / 2^(level-1)), level >= 1.
torch::Tensor resize_mask(const torch::Tensor& mask, int64_t level);
MaskTensor resize_mask(const MaskTensor& mask, int64_t level);

// Nearest resize of a (batched) mask to an arbitrary spatial size.
torch::Tensor resize_mask_to(const torch::Tensor& mask, int64_t height, int64_t width);

// Stacks pairs into B x 3 x H x W images and B x 1 x H x W masks.
struct Batch {
    torch::Tensor images;
    torch::Tensor masks;
    std::vector<std::string> ids;
};
Batch collate(const std::vector<SamplePair>& pairs);

// Indexable source of sample pairs.
class Dataset {
public:
    virtual ~Dataset() = default;
    virtual std::size_t size() const = 0;
    virtual SamplePair get(std::size_t index, std::mt19937_64* rng = nullptr) const = 0;
};

class SyntheticDataset final : public Dataset {
public:
    SyntheticDataset(std::size_t count, int64_t image_size, uint64_t base_seed = 0);
    std::size_t size() const override { return count_; }
    SamplePair get(std::size_t index, std::mt19937_64* rng = nullptr) const override;

private:
    std::size_t count_;
    int64_t image_size_;
    uint64_t base_seed_;
};

// Images from a newline-delimited manifest, masks from a directory tree.
// Without an RNG the pairing is fixed by `pairing_seed`; with one (training)
// a random mask with optional flips is drawn per access.
class FileDataset final : public Dataset {
public:
    FileDataset(const std::filesystem::path& manifest, const std::filesystem::path& mask_dir, int64_t image_size,
                bool center_crop, bool flip_masks, uint64_t pairing_seed, int64_t levels = 3);
    std::size_t size() const override { return images_.size(); }
    SamplePair get(std::size_t index, std::mt19937_64* rng = nullptr) const override;

    const std::vector<std::filesystem::path>& image_paths() const { return images_; }
    const std::vector<std::filesystem::path>& mask_paths() const { return masks_; }

private:
    std::vector<std::filesystem::path> images_;
    std::vector<std::filesystem::path> masks_;
    std::vector<std::size_t> pairing_;
    int64_t image_size_;
    bool center_crop_;
    bool flip_masks_;
    int64_t levels_;
};

std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest);
std::vector<std::filesystem::path> scan_pngs(const std::filesystem::path& dir);

} // namespace spn
