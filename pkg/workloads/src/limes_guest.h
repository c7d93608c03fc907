/* Shared guest-side plumbing for Limes workload modules.
 *
 * Every guest exports:
 *   memory                               linear memory
 *   limes_alloc(size) -> ptr             bump allocator (no free; instances are single-shot)
 *   run(in_ptr, in_len, ret_ptr)         entrypoint; writes a result record at ret_ptr
 *
 * Result record layout (little-endian u32s):
 *   [0] tag: 0 = ok, 1 = guest error (payload is a UTF-8 message)
 *   [4] payload ptr
 *   [8] payload len
 *
 * Built freestanding (no libc); file access goes through WASI preview 1
 * imports against the first preopened directory.
 */
#ifndef LIMES_GUEST_H
#define LIMES_GUEST_H

typedef unsigned char u8;
typedef unsigned short u16;
typedef unsigned int u32;
typedef unsigned long long u64;
typedef int i32;
typedef unsigned long usize;

#define WASM_EXPORT(name) __attribute__((export_name(name)))
#define WASI_IMPORT(name) \
    __attribute__((import_module("wasi_snapshot_preview1"), import_name(name)))

/* ---- WASI preview 1 subset ---- */

typedef struct {
    const u8 *buf;
    usize len;
} ciovec_t;

typedef struct {
    u8 *buf;
    usize len;
} iovec_t;

typedef struct {
    u8 tag; /* 0 = preopened directory */
    u8 _pad[3];
    u32 name_len;
} prestat_t;

WASI_IMPORT("fd_write") i32 wasi_fd_write(i32 fd, const ciovec_t *iovs, usize n, usize *written);
WASI_IMPORT("fd_read") i32 wasi_fd_read(i32 fd, const iovec_t *iovs, usize n, usize *nread);
WASI_IMPORT("fd_close") i32 wasi_fd_close(i32 fd);
WASI_IMPORT("fd_prestat_get") i32 wasi_fd_prestat_get(i32 fd, prestat_t *out);
WASI_IMPORT("path_open")
i32 wasi_path_open(i32 dirfd, u32 dirflags, const char *path, usize path_len, u16 oflags,
                   u64 rights_base, u64 rights_inheriting, u16 fdflags, i32 *fd_out);

#define WASI_RIGHT_FD_READ (1ULL << 1)
#define WASI_RIGHT_FD_WRITE (1ULL << 6)
#define WASI_OFLAG_CREAT (1 << 0)
#define WASI_OFLAG_TRUNC (1 << 3)
#define WASI_LOOKUP_SYMLINK_FOLLOW 1

/* ---- memory ---- */

extern unsigned char __heap_base;
static usize g_heap = 0;

static inline void *guest_alloc(usize n) {
    if (g_heap == 0)
        g_heap = (usize)&__heap_base;
    g_heap = (g_heap + 15) & ~(usize)15;
    usize start = g_heap;
    usize end = start + n;
    usize have = (usize)__builtin_wasm_memory_size(0) * 65536;
    if (end > have) {
        usize need_pages = (end - have + 65535) / 65536;
        if (__builtin_wasm_memory_grow(0, need_pages) == (usize)-1)
            return 0; /* OOM: callers turn this into a trap */
    }
    g_heap = end;
    return (void *)start;
}

WASM_EXPORT("limes_alloc")
void *limes_alloc(usize n) { return guest_alloc(n); }

static inline void gmemcpy(void *dst, const void *src, usize n) {
    __builtin_memcpy(dst, src, n);
}

static inline void gmemset(void *dst, int v, usize n) {
    __builtin_memset(dst, v, n);
}

static inline usize gstrlen(const char *s) {
    usize n = 0;
    while (s[n])
        n++;
    return n;
}

static inline int gstreq(const char *a, usize alen, const char *b) {
    if (gstrlen(b) != alen)
        return 0;
    for (usize i = 0; i < alen; i++)
        if (a[i] != b[i])
            return 0;
    return 1;
}

/* ---- result record ---- */

static inline void ret_ok(u8 *ret, const u8 *payload, usize len) {
    ((u32 *)ret)[0] = 0;
    ((u32 *)ret)[1] = (u32)(usize)payload;
    ((u32 *)ret)[2] = (u32)len;
}

static inline void ret_err(u8 *ret, const char *msg) {
    usize n = gstrlen(msg);
    u8 *copy = guest_alloc(n);
    if (copy)
        gmemcpy(copy, msg, n);
    ((u32 *)ret)[0] = 1;
    ((u32 *)ret)[1] = (u32)(usize)copy;
    ((u32 *)ret)[2] = copy ? (u32)n : 0;
}

/* Error message scratch: "<context>: errno <n>" */
static char g_errbuf[128];

static inline const char *errno_msg(const char *context, i32 err) {
    usize i = 0;
    usize cn = gstrlen(context);
    if (cn > 96)
        cn = 96;
    gmemcpy(g_errbuf, context, cn);
    i = cn;
    const char *mid = ": errno ";
    gmemcpy(g_errbuf + i, mid, 8);
    i += 8;
    char digits[12];
    int d = 0;
    if (err == 0)
        digits[d++] = '0';
    u32 v = err < 0 ? (u32)(-err) : (u32)err;
    while (v > 0 && d < 11) {
        digits[d++] = (char)('0' + v % 10);
        v /= 10;
    }
    while (d > 0)
        g_errbuf[i++] = digits[--d];
    g_errbuf[i] = 0;
    return g_errbuf;
}

/* ---- preopened directory + file helpers ---- */

static inline i32 preopen_dirfd(void) {
    for (i32 fd = 3; fd < 16; fd++) {
        prestat_t ps;
        if (wasi_fd_prestat_get(fd, &ps) == 0 && ps.tag == 0)
            return fd;
    }
    return -1;
}

/* Reads a whole file from the preopened dir; returns 0 on success. */
static inline i32 read_file(const char *path, u8 **out, usize *out_len) {
    i32 dirfd = preopen_dirfd();
    if (dirfd < 0)
        return -1;
    i32 fd;
    i32 err = wasi_path_open(dirfd, WASI_LOOKUP_SYMLINK_FOLLOW, path, gstrlen(path), 0,
                             WASI_RIGHT_FD_READ, 0, 0, &fd);
    if (err != 0)
        return err;
    usize cap = 65536, len = 0;
    u8 *buf = guest_alloc(cap);
    if (!buf) {
        wasi_fd_close(fd);
        return -1;
    }
    for (;;) {
        if (len == cap) {
            u8 *bigger = guest_alloc(cap * 2);
            if (!bigger) {
                wasi_fd_close(fd);
                return -1;
            }
            gmemcpy(bigger, buf, len);
            buf = bigger;
            cap *= 2;
        }
        iovec_t iov = {buf + len, cap - len};
        usize nread = 0;
        err = wasi_fd_read(fd, &iov, 1, &nread);
        if (err != 0) {
            wasi_fd_close(fd);
            return err;
        }
        if (nread == 0)
            break;
        len += nread;
    }
    wasi_fd_close(fd);
    *out = buf;
    *out_len = len;
    return 0;
}

/* Creates/truncates a file in the preopened dir and writes it; 0 on success. */
static inline i32 write_file(const char *path, const u8 *data, usize len) {
    i32 dirfd = preopen_dirfd();
    if (dirfd < 0)
        return -1;
    i32 fd;
    i32 err = wasi_path_open(dirfd, WASI_LOOKUP_SYMLINK_FOLLOW, path, gstrlen(path),
                             WASI_OFLAG_CREAT | WASI_OFLAG_TRUNC,
                             WASI_RIGHT_FD_WRITE | WASI_RIGHT_FD_READ, 0, 0, &fd);
    if (err != 0)
        return err;
    usize off = 0;
    while (off < len) {
        ciovec_t iov = {data + off, len - off};
        usize written = 0;
        err = wasi_fd_write(fd, &iov, 1, &written);
        if (err != 0) {
            wasi_fd_close(fd);
            return err;
        }
        if (written == 0)
            break;
        off += written;
    }
    wasi_fd_close(fd);
    return off == len ? 0 : -1;
}

#endif /* LIMES_GUEST_H */
