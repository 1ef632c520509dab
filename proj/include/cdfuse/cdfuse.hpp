#pragma once

#include "cdfuse/tensor.hpp"
#include "cdfuse/cdblock.hpp"
#include "cdfuse/network.hpp"
#include "cdfuse/colorpipe.hpp"
#include "cdfuse/hlif.hpp"
#include "cdfuse/autograd.hpp"
#include "cdfuse/metrics.hpp"
#include "cdfuse/costmodel.hpp"
