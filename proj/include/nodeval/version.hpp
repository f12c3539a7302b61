#pragma once

#define NODEVAL_VERSION "1.0.0"
