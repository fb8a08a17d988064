#pragma once

// Lookup-based CPU attention-score kernels: product-quantized key codes,
// register-resident lookup tables and byte-shuffle accumulation, validated
// against an exact multiply-add reference.

#include "nomad/bench.hpp"
#include "nomad/errors.hpp"
#include "nomad/eval.hpp"
#include "nomad/io.hpp"
#include "nomad/kernel.hpp"
#include "nomad/key_code_cache.hpp"
#include "nomad/lut.hpp"
#include "nomad/quantizer.hpp"
#include "nomad/reference.hpp"
#include "nomad/stats.hpp"
#include "nomad/synthetic.hpp"
