// SPDX-License-Identifier: Apache-2.0

//! Criterion benchmarks for `fairpar`; see `benches/`.
