// Single point of inclusion for httplib so every TU agrees on the SSL
// configuration (mixing configurations is an ODR violation).
#pragma once

#ifdef AG_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

// glibc resolv.h (pulled in transitively) defines _res, which collides with
// parameter names in other headers
#ifdef _res
#undef _res
#endif
