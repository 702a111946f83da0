//! Bucket checksums: CRC-32 as used by zip/png (IEEE polynomial, reflected
//! form 0xEDB88320, init and final xor 0xFFFFFFFF).

/// Checksum over a bucket's key and value bytes.
pub fn checksum32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}
