/* test guest: copies stdin to stdout, plus a fixed marker line, and returns
 * the byte count read. Exercises the stdin/stdout plumbing of the sandbox
 * policy. */
#include "limes_guest.h"

WASM_EXPORT("run")
void run(const u8 *in, usize in_len, u8 *ret) {
    (void)in;
    (void)in_len;
    usize total = 0;
    u8 buf[4096];
    for (;;) {
        iovec_t iov = {buf, sizeof(buf)};
        usize nread = 0;
        if (wasi_fd_read(0, &iov, 1, &nread) != 0 || nread == 0)
            break;
        usize off = 0;
        while (off < nread) {
            ciovec_t out = {buf + off, nread - off};
            usize written = 0;
            if (wasi_fd_write(1, &out, 1, &written) != 0 || written == 0)
                break;
            off += written;
        }
        total += nread;
    }
    static const char marker[] = "\n[echo done]\n";
    ciovec_t out = {(const u8 *)marker, sizeof(marker) - 1};
    usize written = 0;
    wasi_fd_write(1, &out, 1, &written);

    u8 *count = guest_alloc(4);
    if (!count) {
        ret_err(ret, "out of memory");
        return;
    }
    count[0] = (u8)(total & 0xff);
    count[1] = (u8)((total >> 8) & 0xff);
    count[2] = (u8)((total >> 16) & 0xff);
    count[3] = (u8)((total >> 24) & 0xff);
    ret_ok(ret, count, 4);
}
