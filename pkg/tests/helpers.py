from collections import deque

from qofab.bcch import BcchChannel


class ChannelNet:
    """n channel endpoints wired with an explicit FIFO message queue."""

    def __init__(self, scheme, n=4, f=1, seed=7, cls=BcchChannel):
        self.n, self.f = n, f
        self.keys = {p: scheme.keygen(seed, p) for p in range(1, n + 1)}
        self.vks = {p: k.verify_key for p, k in self.keys.items()}
        self.drops = []
        self.chan = {p: cls(p, n, f, scheme, self.keys[p], self.vks,
                            on_drop=lambda reason, p=p, **kw: self.drops.append((p, reason)))
                     for p in range(1, n + 1)}
        self.queue = deque()
        self.delivered = {p: [] for p in range(1, n + 1)}
        self.wire = []

    def post(self, src, out):
        for dest, msg in out:
            self.wire.append((src, dest, msg))
            self.queue.append((src, dest, msg))

    def broadcast(self, pid, payload):
        self.post(pid, self.chan[pid].broadcast(payload))

    def step(self):
        src, dest, msg = self.queue.popleft()
        deliveries, out = self.chan[dest].on_wire(src, msg)
        self.delivered[dest].extend(deliveries)
        self.post(dest, out)

    def run(self, keep=lambda src, dest, msg: True):
        while self.queue:
            src, dest, msg = self.queue[0]
            if not keep(src, dest, msg):
                self.queue.popleft()
                continue
            self.step()


class RecordingEnv:
    """Environment stub for driving one OrderFairProcess by hand."""

    record_stats = True

    def __init__(self):
        self.now = 0
        self.sent = []
        self.proposals = []
        self.events = []

    def send(self, dest, msg):
        self.sent.append((dest, msg))

    def propose(self, round_, proposal):
        self.proposals.append((round_, proposal))

    def record(self, kind, **fields):
        self.events.append(dict(kind=kind, **fields))

    def kinds(self, kind):
        return [e for e in self.events if e["kind"] == kind]

    def take(self):
        out, self.sent = self.sent, []
        return out
