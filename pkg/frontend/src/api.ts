/**
 * Typed client for the box control API. No DOM dependencies so the same
 * code runs in the browser panel and in node test harnesses.
 */

export type BoxEventKind =
  | 'PowerOn'
  | 'PressAcquire'
  | 'PressDeploy'
  | 'LidOpened'
  | 'LidClosed';

export interface SessionSnapshot {
  session_id: number;
  announced: boolean;
  macs: Record<string, string>;
  flashed: number;
  failed: number;
}

export interface BoxSnapshot {
  state: string;
  powered: boolean;
  lid_open: boolean;
  deploy_armed: boolean;
  acquire_pending: boolean;
  network_up: boolean;
  keys: number;
  images: string[];
  session: SessionSnapshot | null;
  sim_time_us: number;
}

export interface TranscriptEntry {
  seq: number;
  t_us: number;
  utterance_id: string;
  text: string;
}

export interface NodeRow {
  id: number;
  mac: string;
  honesty: string;
  placed: boolean;
  mode: string;
  joined: string | null;
  joined_rogue: boolean;
  stage: string | null;
}

export interface AttackerStatus {
  kind: 'eavesdropper' | 'rogue_ap' | null;
  active: boolean;
  frames_seen?: number;
  decoded_box_tx_bytes?: number;
}

export type StreamEvent =
  | { type: 'transcript'; entry: TranscriptEntry }
  | { type: 'state'; state: BoxSnapshot };

export interface ApiResult<T> {
  ok: boolean;
  status: number;
  body: T;
}

async function asResult<T>(resp: Response): Promise<ApiResult<T>> {
  const body = (await resp.json().catch(() => ({}))) as T;
  return { ok: resp.ok, status: resp.status, body };
}

export class ControlClient {
  constructor(readonly base: string) {}

  private url(path: string): string {
    return `${this.base}${path}`;
  }

  async boxState(): Promise<BoxSnapshot> {
    const resp = await fetch(this.url('/box/state'));
    if (!resp.ok) throw new Error(`box state failed: ${resp.status}`);
    return (await resp.json()) as BoxSnapshot;
  }

  async transcript(since: number): Promise<{ entries: TranscriptEntry[]; next: number }> {
    const resp = await fetch(this.url(`/box/transcript?since=${since}`));
    if (!resp.ok) throw new Error(`transcript failed: ${resp.status}`);
    return (await resp.json()) as { entries: TranscriptEntry[]; next: number };
  }

  async nodes(): Promise<NodeRow[]> {
    const resp = await fetch(this.url('/sim/nodes'));
    if (!resp.ok) throw new Error(`nodes failed: ${resp.status}`);
    const data = (await resp.json()) as { nodes: NodeRow[] };
    return data.nodes;
  }

  async attacker(): Promise<AttackerStatus> {
    const resp = await fetch(this.url('/sim/attacker'));
    if (!resp.ok) throw new Error(`attacker failed: ${resp.status}`);
    return (await resp.json()) as AttackerStatus;
  }

  async sendEvent(kind: BoxEventKind): Promise<ApiResult<{ error?: string }>> {
    return asResult(
      await fetch(this.url('/box/event'), {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ kind }),
      }),
    );
  }

  async placeNode(id: number): Promise<ApiResult<{ error?: string }>> {
    return asResult(
      await fetch(this.url('/sim/place'), { method: 'POST', body: JSON.stringify({ id }) }),
    );
  }

  async removeNode(id: number): Promise<ApiResult<{ error?: string }>> {
    return asResult(
      await fetch(this.url('/sim/remove'), { method: 'POST', body: JSON.stringify({ id }) }),
    );
  }

  async toggleAttacker(active: boolean): Promise<ApiResult<{ error?: string }>> {
    return asResult(
      await fetch(this.url('/sim/attacker'), { method: 'POST', body: JSON.stringify({ active }) }),
    );
  }

  /**
   * Consume the server-sent event stream. Resolves when the stream ends;
   * abort via the signal. Implemented over fetch so it works in node 20
   * as well as browsers (no EventSource dependency).
   */
  async streamEvents(
    since: number,
    onEvent: (event: StreamEvent) => void,
    signal?: AbortSignal,
  ): Promise<void> {
    const resp = await fetch(this.url(`/events?since=${since}`), { signal });
    if (!resp.ok || !resp.body) throw new Error(`event stream failed: ${resp.status}`);
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    let buffer = '';
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let split;
      while ((split = buffer.indexOf('\n\n')) >= 0) {
        const block = buffer.slice(0, split);
        buffer = buffer.slice(split + 2);
        for (const line of block.split('\n')) {
          if (line.startsWith('data: ')) {
            onEvent(JSON.parse(line.slice(6)) as StreamEvent);
          }
        }
      }
    }
  }
}
