#pragma once

#include "ssdiff/checks.hpp"
#include "ssdiff/color.hpp"
#include "ssdiff/commands.hpp"
#include "ssdiff/config.hpp"
#include "ssdiff/denoiser.hpp"
#include "ssdiff/error.hpp"
#include "ssdiff/guidance.hpp"
#include "ssdiff/io.hpp"
#include "ssdiff/metrics.hpp"
#include "ssdiff/noise.hpp"
#include "ssdiff/protocol.hpp"
#include "ssdiff/regions.hpp"
#include "ssdiff/remote.hpp"
#include "ssdiff/sampler.hpp"
#include "ssdiff/schedule.hpp"
#include "ssdiff/table.hpp"
#include "ssdiff/tensor.hpp"
