// Trailing-edge debounce with at most one in-flight async run. Rapid orbit
// drags collapse to a single render request; a run scheduled while another
// is executing waits for it to settle first.

export interface Debounced<A extends unknown[]> {
  (...args: A): void;
  cancel(): void;
  flush(): Promise<void>;
  inFlight(): boolean;
}

type Timer = ReturnType<typeof setTimeout>;

export function debounceAsync<A extends unknown[]>(
  fn: (...args: A) => Promise<void>,
  waitMs: number,
): Debounced<A> {
  let timer: Timer | null = null;
  let pendingArgs: A | null = null;
  let running: Promise<void> | null = null;

  const run = async (): Promise<void> => {
    while (pendingArgs !== null) {
      const args = pendingArgs;
      pendingArgs = null;
      try {
        await fn(...args);
      } catch {
        // losing a frame is fine; the next interaction re-renders
      }
    }
    running = null;
  };

  const debounced = (...args: A): void => {
    pendingArgs = args;
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = null;
      if (running === null) {
        running = run();
      }
    }, waitMs);
  };

  debounced.cancel = () => {
    if (timer !== null) clearTimeout(timer);
    timer = null;
    pendingArgs = null;
  };

  debounced.flush = async () => {
    if (timer !== null) {
      clearTimeout(timer);
      timer = null;
    }
    if (running === null && pendingArgs !== null) {
      running = run();
    }
    if (running !== null) await running;
  };

  debounced.inFlight = () => running !== null;
  return debounced;
}
