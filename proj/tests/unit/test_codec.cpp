#include <gtest/gtest.h>

#include "spn/codec.hpp"
#include "spn/errors.hpp"

using namespace spn;

namespace {
std::vector<uint8_t> bytes(const std::string& s) { return {s.begin(), s.end()}; }
} // namespace

TEST(Base64, Rfc4648Vectors) {
    const std::pair<std::string, std::string> vectors[] = {
        {"", ""}, {"f", "Zg=="}, {"fo", "Zm8="}, {"foo", "Zm9v"},
        {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="}, {"foobar", "Zm9vYmFy"},
    };
    for (const auto& [plain, encoded] : vectors) {
        EXPECT_EQ(base64_encode(bytes(plain)), encoded);
        EXPECT_EQ(base64_decode(encoded), bytes(plain));
    }
}

TEST(Base64, WhitespaceAndErrors) {
    EXPECT_EQ(base64_decode("  Zm9v\nYmFy \n"), bytes("foobar"));
    EXPECT_THROW(base64_decode("Zm9"), DecodeError);
    EXPECT_THROW(base64_decode("Zm9*"), DecodeError);
    std::vector<uint8_t> all(256);
    for (int i = 0; i < 256; ++i) all[i] = static_cast<uint8_t>(i);
    EXPECT_EQ(base64_decode(base64_encode(all)), all);
}

TEST(Sha256, KnownDigests) {
    EXPECT_EQ(sha256_hex(bytes("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(sha256_hex({}), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}
