use std::net::SocketAddr;
use std::sync::Arc;

use dbh_core::service::{encode, sniff_request_id, ErrorReply, Message, ServiceContext};
use dbh_core::Error;
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::watch;
use tokio::task::JoinSet;

use crate::{stopped, ServerError};

enum Frame {
    Line(Vec<u8>),
    Eof,
    /// Stream ended in the middle of a frame.
    Truncated(Vec<u8>),
    Oversized,
}

async fn read_frame<R: AsyncBufReadExt + Unpin>(reader: &mut R, max_payload: usize) -> std::io::Result<Frame> {
    let mut buf = Vec::new();
    let n = reader.take(max_payload as u64 + 1).read_until(b'\n', &mut buf).await?;
    if n == 0 {
        return Ok(Frame::Eof);
    }
    if buf.last() == Some(&b'\n') {
        buf.pop();
        if buf.last() == Some(&b'\r') {
            buf.pop();
        }
        return Ok(Frame::Line(buf));
    }
    Ok(if buf.len() > max_payload { Frame::Oversized } else { Frame::Truncated(buf) })
}

fn error_frame(request_id: Option<String>, e: Error) -> Vec<u8> {
    encode(&Message::Error(ErrorReply::from_error(request_id, &e)))
}

async fn connection(
    sock: TcpStream,
    peer: SocketAddr,
    ctx: Arc<ServiceContext>,
    max_payload: usize,
    rx: watch::Receiver<bool>,
) {
    let (read, mut write) = sock.into_split();
    let mut reader = BufReader::new(read);
    loop {
        // Frames already buffered win over a pending shutdown.
        let frame = tokio::select! {
            biased;
            frame = read_frame(&mut reader, max_payload) => frame,
            _ = stopped(rx.clone()) => break,
        };
        let (reply, keep_open) = match frame {
            Ok(Frame::Line(line)) if line.iter().all(u8::is_ascii_whitespace) => continue,
            Ok(Frame::Line(line)) => {
                let ctx = ctx.clone();
                match tokio::task::spawn_blocking(move || ctx.handle_line(&line)).await {
                    Ok(reply) => (reply, true),
                    Err(e) => {
                        log::error!("{peer}: request handler panicked: {e}");
                        break;
                    }
                }
            }
            Ok(Frame::Eof) => break,
            Ok(Frame::Truncated(partial)) => {
                (error_frame(sniff_request_id(&partial), Error::Frame("stream ended mid-frame".into())), false)
            }
            Ok(Frame::Oversized) => {
                (error_frame(None, Error::Frame(format!("frame exceeds {max_payload} bytes"))), false)
            }
            Err(e) => {
                log::debug!("{peer}: read failed: {e}");
                break;
            }
        };
        if let Err(e) = write.write_all(&reply).await {
            log::debug!("{peer}: write failed: {e}");
            break;
        }
        if !keep_open {
            break;
        }
    }
    let _ = write.shutdown().await;
    log::debug!("{peer}: closed");
}

pub(crate) async fn serve(
    listener: TcpListener,
    ctx: Arc<ServiceContext>,
    max_payload: usize,
    rx: watch::Receiver<bool>,
) -> Result<(), ServerError> {
    let mut connections = JoinSet::new();
    loop {
        tokio::select! {
            _ = stopped(rx.clone()) => break,
            accepted = listener.accept() => match accepted {
                Ok((sock, peer)) => {
                    log::debug!("{peer}: connected");
                    connections.spawn(connection(sock, peer, ctx.clone(), max_payload, rx.clone()));
                }
                Err(e) => log::warn!("accept failed: {e}"),
            },
            Some(_) = connections.join_next(), if !connections.is_empty() => {}
        }
    }
    drop(listener);
    while connections.join_next().await.is_some() {}
    Ok(())
}
