// SPDX-License-Identifier: Apache-2.0

//! Shared fixtures for the benchmarks.

use featherloop_core::workload::{derive_output_extents, fixtures};
use featherloop_core::{LayerKind, LayerShape, LayoutDescriptor};

/// A mid-network 3x3 convolution.
pub fn conv3x3() -> LayerShape {
    fixtures::resnet50().layer("s3b2_3x3").expect("fixture layer").shape.clone()
}

/// A small GEMM.
pub fn gemm() -> LayerShape {
    derive_output_extents(&LayerShape::gemm(128, 256, 256)).expect("valid shape")
}

pub fn conv_layout(text: &str) -> LayoutDescriptor {
    LayoutDescriptor::parse(text, LayerKind::Conv).expect("valid layout")
}
