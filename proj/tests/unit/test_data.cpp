#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "spn/data.hpp"
#include "spn/errors.hpp"
#include "test_util.hpp"

using namespace spn;
using spn::testing::TempDir;

namespace {

void write_gray(const std::filesystem::path& path, const cv::Mat& gray) { ASSERT_TRUE(cv::imwrite(path.string(), gray)); }

// Values produced by tests/oracles/center_crop_oracle.py (PIL bilinear).
struct Corner {
    int row, col;
    int rgb[3];
};
constexpr Corner kCropCorners[] = {
    {0, 0, {43, 0, 26}},
    {0, 255, {212, 0, 128}},
    {255, 0, {43, 255, 128}},
    {255, 255, {212, 255, 229}},
};

} // namespace

TEST(LoadImage, BlackAndWhiteMapToRangeEndpoints) {
    TempDir dir;
    cv::imwrite((dir / "black.png").string(), cv::Mat(256, 256, CV_8UC3, cv::Scalar(0, 0, 0)));
    cv::imwrite((dir / "white.png").string(), cv::Mat(256, 256, CV_8UC3, cv::Scalar(255, 255, 255)));
    auto black = load_image(dir / "black.png", 256, false);
    auto white = load_image(dir / "white.png", 256, false);
    EXPECT_EQ(black.tensor().sizes(), (std::vector<int64_t>{3, 256, 256}));
    EXPECT_TRUE((black.tensor() == -1.0f).all().item<bool>());
    EXPECT_TRUE((white.tensor() == 1.0f).all().item<bool>());
}

TEST(LoadImage, CenterCropMatchesReferenceResampler) {
    TempDir dir;
    cv::Mat bgr(200, 300, CV_8UC3);
    for (int y = 0; y < 200; ++y)
        for (int x = 0; x < 300; ++x) {
            const int r = static_cast<int>(std::lround(x * 255.0 / 299.0));
            const int g = static_cast<int>(std::lround(y * 255.0 / 199.0));
            const int b = static_cast<int>(std::lround((x + y) * 255.0 / 498.0));
            bgr.at<cv::Vec3b>(y, x) = cv::Vec3b(b, g, r);
        }
    cv::imwrite((dir / "grad.png").string(), bgr);
    auto image = load_image(dir / "grad.png", 256, true);
    ASSERT_EQ(image.height(), 256);
    ASSERT_EQ(image.width(), 256);
    const auto bytes = (image.tensor() + 1.0f) * 127.5f;
    for (const auto& corner : kCropCorners)
        for (int c = 0; c < 3; ++c)
            EXPECT_NEAR(bytes[c][corner.row][corner.col].item<double>(), corner.rgb[c], 1.0 + 1e-4)
                << "corner (" << corner.row << "," << corner.col << ") channel " << c;
}

TEST(LoadImage, Errors) {
    TempDir dir;
    std::ofstream(dir / "junk.png") << "not a png";
    EXPECT_THROW(load_image(dir / "junk.png", 64, false), DecodeError);
    EXPECT_THROW(load_image(dir / "missing.png", 64, false), DecodeError);
    cv::imwrite((dir / "ok.png").string(), cv::Mat(8, 8, CV_8UC3, cv::Scalar(1, 2, 3)));
    EXPECT_THROW(load_image(dir / "ok.png", 30, false, 3), ConfigError);
}

TEST(LoadMask, ThresholdAndExtremes) {
    TempDir dir;
    write_gray(dir / "ones.png", cv::Mat(16, 16, CV_8UC1, cv::Scalar(255)));
    write_gray(dir / "zeros.png", cv::Mat(16, 16, CV_8UC1, cv::Scalar(0)));
    cv::Mat edge(1, 4, CV_8UC1);
    edge.at<uint8_t>(0, 0) = 0;
    edge.at<uint8_t>(0, 1) = 127;
    edge.at<uint8_t>(0, 2) = 128;
    edge.at<uint8_t>(0, 3) = 255;
    write_gray(dir / "edge.png", edge);

    EXPECT_TRUE((load_mask(dir / "ones.png", 16, false).tensor() == 1).all().item<bool>());
    EXPECT_TRUE((load_mask(dir / "zeros.png", 16, false).tensor() == 0).all().item<bool>());
    auto e = load_mask(dir / "edge.png", 0, false).tensor();
    EXPECT_EQ(e[0][0][0].item<float>(), 0.0f);
    EXPECT_EQ(e[0][0][1].item<float>(), 0.0f);
    EXPECT_EQ(e[0][0][2].item<float>(), 1.0f);
    EXPECT_EQ(e[0][0][3].item<float>(), 1.0f);
    EXPECT_THROW(load_mask(dir / "absent.png", 16, false), DecodeError);
}

TEST(LoadMask, CheckerboardRatioIsExactlyHalf) {
    TempDir dir;
    cv::Mat board(64, 64, CV_8UC1);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) board.at<uint8_t>(y, x) = ((x + y) % 2) ? 255 : 0;
    write_gray(dir / "board.png", board);
    EXPECT_EQ(mask_ratio(load_mask(dir / "board.png", 64, false)), 0.5);
}

TEST(LoadMask, FlipAugmentPreservesRatioAndVaries) {
    TempDir dir;
    cv::Mat corner(32, 32, CV_8UC1, cv::Scalar(0));
    corner(cv::Rect(0, 0, 8, 4)).setTo(255);
    write_gray(dir / "corner.png", corner);
    std::mt19937_64 rng(3);
    std::set<std::pair<int, int>> positions;
    for (int i = 0; i < 32; ++i) {
        auto m = load_mask(dir / "corner.png", 32, true, &rng);
        EXPECT_DOUBLE_EQ(mask_ratio(m), 32.0 / 1024.0);
        positions.insert({m.tensor()[0][0][0].item<int>(), m.tensor()[0][31][31].item<int>()});
    }
    EXPECT_GT(positions.size(), 1u);
}

TEST(MaskRatio, ExtremesAndIntegerCount) {
    EXPECT_EQ(mask_ratio(MaskTensor(torch::zeros({1, 8, 8}))), 0.0);
    EXPECT_EQ(mask_ratio(MaskTensor(torch::ones({1, 8, 8}))), 1.0);
    // Exact-fraction oracle: 19660/65536 = 0.29998779..., 19661/65536 = 0.30000305...
    auto flat = torch::zeros({256 * 256});
    flat.slice(0, 0, 19660).fill_(1);
    MaskTensor below(flat.view({1, 256, 256}).clone());
    EXPECT_NEAR(mask_ratio(below), 0.29998779296875, 1e-15);
    EXPECT_EQ(bucket_of(below).label, "20-30%");
    flat.slice(0, 0, 19661).fill_(1);
    MaskTensor above(flat.view({1, 256, 256}).clone());
    EXPECT_NEAR(mask_ratio(above), 0.3000030517578125, 1e-15);
    EXPECT_EQ(bucket_of(above).label, "30-40%");
}

TEST(Buckets, BoundariesAndErrors) {
    EXPECT_EQ(bucket_of_ratio(0.05).label, "0-10%");
    EXPECT_EQ(bucket_of_ratio(0.10).label, "0-10%");
    EXPECT_EQ(bucket_of_ratio(0.55).label, "50-60%");
    EXPECT_EQ(bucket_of_ratio(0.6).label, "50-60%");
    EXPECT_THROW(bucket_of_ratio(0.0), ProtocolError);
    EXPECT_THROW(bucket_of_ratio(0.61), ProtocolError);
    EXPECT_THROW(bucket_of(MaskTensor(torch::zeros({1, 4, 4}))), ProtocolError);

    // Exact tenths use integer arithmetic: 10 of 100 pixels is the upper edge of the first bucket.
    auto flat = torch::zeros({100});
    flat.slice(0, 0, 10).fill_(1);
    EXPECT_EQ(bucket_of(MaskTensor(flat.view({1, 10, 10}))).label, "0-10%");
    flat.slice(0, 0, 11).fill_(1);
    EXPECT_EQ(bucket_of(MaskTensor(flat.view({1, 10, 10}))).label, "10-20%");
}

TEST(Buckets, PartitionIsTotalAndDisjoint) {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> count(1, 614); // ratio in (0, 0.6] of 1024 pixels
    for (int trial = 0; trial < 1000; ++trial) {
        auto flat = torch::zeros({1024});
        flat.slice(0, 0, count(rng)).fill_(1);
        MaskTensor m(flat.view({1, 32, 32}));
        int hits = 0;
        for (const auto& b : canonical_buckets()) hits += b.contains(mask_ratio(m)) ? 1 : 0;
        EXPECT_EQ(hits, 1);
        EXPECT_TRUE(bucket_of(m).contains(mask_ratio(m)));
    }
}

TEST(Synthetic, DeterministicAndVaried) {
    auto a = make_synthetic_pair(5, 64);
    auto b = make_synthetic_pair(5, 64);
    EXPECT_TRUE(torch::equal(a.image.tensor(), b.image.tensor()));
    EXPECT_TRUE(torch::equal(a.mask.tensor(), b.mask.tensor()));
    auto c = make_synthetic_pair(0, 64);
    auto d = make_synthetic_pair(1, 64);
    EXPECT_GT((c.image.tensor() - d.image.tensor()).abs().sum().item<double>(), 0.0);
    EXPECT_GE(a.image.tensor().min().item<float>(), -1.0f);
    EXPECT_LE(a.image.tensor().max().item<float>(), 1.0f);
}

TEST(Synthetic, MasksCoverBucketsAndStayInProtocol) {
    std::set<std::string> seen;
    for (uint64_t seed = 0; seed < 1000; ++seed) {
        auto m = make_stroke_mask(seed, 64);
        const double r = mask_ratio(m);
        ASSERT_GT(r, 0.0);
        ASSERT_LE(r, 0.6);
        seen.insert(bucket_of(m).label);
    }
    EXPECT_GE(seen.size(), 4u);
}

TEST(Composite, SelectorSemantics) {
    auto out = ImageTensor(torch::full({3, 4, 4}, 0.5f));
    auto in = ImageTensor(torch::full({3, 4, 4}, -0.5f));
    EXPECT_TRUE(torch::equal(composite(out, in, MaskTensor(torch::zeros({1, 4, 4}))).tensor(), in.tensor()));
    EXPECT_TRUE(torch::equal(composite(out, in, MaskTensor(torch::ones({1, 4, 4}))).tensor(), out.tensor()));
    auto half = torch::zeros({1, 4, 4});
    half.slice(2, 2, 4).fill_(1);
    auto mixed = composite(out, in, MaskTensor(half)).tensor();
    EXPECT_TRUE((mixed.slice(2, 0, 2) == -0.5f).all().item<bool>());
    EXPECT_TRUE((mixed.slice(2, 2, 4) == 0.5f).all().item<bool>());
    EXPECT_THROW(composite(out.tensor(), torch::zeros({3, 4, 5}), half), ShapeError);
}

TEST(ResizeMask, Contracts) {
    auto ones = torch::ones({1, 16, 16});
    for (int64_t l = 1; l <= 4; ++l) {
        auto r = resize_mask(ones, l);
        EXPECT_EQ(r.size(1), 16 >> (l - 1));
        EXPECT_TRUE((r == 1).all().item<bool>());
    }
    auto m = make_stroke_mask(3, 32).tensor();
    EXPECT_TRUE(torch::equal(resize_mask(m, 1), m));

    auto block = torch::zeros({1, 4, 4});
    block.slice(1, 0, 2).slice(2, 0, 2).fill_(1);
    auto small = resize_mask(block, 2);
    EXPECT_EQ(small.sizes(), (std::vector<int64_t>{1, 2, 2}));
    EXPECT_EQ(small.sum().item<float>(), 1.0f);
    EXPECT_THROW(resize_mask(block, 0), ConfigError);
}

TEST(Png, RoundTripIsExactAtEightBits) {
    auto pair = make_synthetic_pair(11, 32);
    auto image = decode_image(encode_png(pair.image));
    EXPECT_TRUE(torch::equal(image.tensor(), pair.image.tensor()));
    auto mask = decode_mask(encode_png(pair.mask));
    EXPECT_TRUE(torch::equal(mask.tensor(), pair.mask.tensor()));
    EXPECT_THROW(decode_image({}), DecodeError);
    EXPECT_THROW(decode_mask({1, 2, 3}), DecodeError);
}

TEST(TensorTypes, Validation) {
    EXPECT_THROW(ImageTensor(torch::zeros({3, 4})), ShapeError);
    EXPECT_THROW(ImageTensor(torch::full({3, 2, 2}, 1.5f)), Error);
    EXPECT_NO_THROW(ImageTensor(torch::full({3, 2, 2}, 1.5f), false));
    EXPECT_THROW(MaskTensor(torch::full({1, 2, 2}, 0.5f)), Error);
    EXPECT_THROW(MaskTensor(torch::zeros({2, 2, 2})), ShapeError);
}

TEST(Datasets, FilePairingIsFixedWithoutRng) {
    TempDir dir;
    std::filesystem::create_directories(dir / "masks" / "sub");
    std::ofstream manifest(dir / "list.txt");
    for (int i = 0; i < 3; ++i) {
        auto pair = make_synthetic_pair(static_cast<uint64_t>(i), 32);
        const auto image_path = dir / ("img" + std::to_string(i) + ".png");
        save_image(pair.image, image_path);
        save_mask(pair.mask, dir / "masks" / "sub" / ("m" + std::to_string(i) + ".png"));
        manifest << image_path.string() << "\n";
    }
    manifest.close();
    FileDataset data(dir / "list.txt", dir / "masks", 32, true, false, 4);
    ASSERT_EQ(data.size(), 3u);
    EXPECT_EQ(data.mask_paths().size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        auto a = data.get(i);
        auto b = data.get(i);
        EXPECT_TRUE(torch::equal(a.mask.tensor(), b.mask.tensor()));
        EXPECT_TRUE(torch::equal(a.image.tensor(), make_synthetic_pair(i, 32).image.tensor()));
    }
    auto batch = collate({data.get(0), data.get(1)});
    EXPECT_EQ(batch.images.sizes(), (std::vector<int64_t>{2, 3, 32, 32}));
    EXPECT_EQ(batch.masks.sizes(), (std::vector<int64_t>{2, 1, 32, 32}));
}
