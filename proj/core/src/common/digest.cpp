#include "pyxray/digest.hpp"

#include <openssl/evp.h>

#include <memory>

#include "pyxray/text.hpp"

namespace pyxray {

std::string sha256_hex(byte_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw error("sha256 digest failed");
    }
    return hex_encode(byte_view(md, len));
}

} // namespace pyxray
