#pragma once

#include "ffeq/channel.hpp"
#include "ffeq/cosim.hpp"
#include "ffeq/dll.hpp"
#include "ffeq/error.hpp"
#include "ffeq/eye.hpp"
#include "ffeq/ffe.hpp"
#include "ffeq/fft.hpp"
#include "ffeq/optimize.hpp"
#include "ffeq/power.hpp"
#include "ffeq/serialize.hpp"
#include "ffeq/signal.hpp"
#include "ffeq/version.hpp"
#include "ffeq/waveform.hpp"
