/* test guest: imports a host function no linker provides, so instantiation
 * must fail with a link error. */
#include "limes_guest.h"

__attribute__((import_module("limes:bogus"), import_name("frobnicate"))) void frobnicate(void);

WASM_EXPORT("run")
void run(const u8 *in, usize in_len, u8 *ret) {
    (void)in;
    (void)in_len;
    frobnicate();
    ret_ok(ret, 0, 0);
}
